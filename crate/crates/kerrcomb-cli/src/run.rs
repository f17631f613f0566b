//! Scenario execution: compute products, write CSVs and metadata.

use crate::report::{ProductRecord, Report, Status, SubRun, SweepRecord, Units};
use crate::scenario::{Inputs, Mode, Product, Scenario, ScenarioError};
use kerrcomb::hamiltonian_audit::{
    self as audit, commutator_count_formula, commutator_mode_count, enumerate_monomials,
    monomial_count_formula, number_difference_commutators, AuditError, Tag,
};
use kerrcomb::linearization::{
    build_modal_jacobian, build_quadrature_jacobian, stability_spectrum, triplet_rates,
    LinearizationError,
};
use kerrcomb::series::{fmt, linspace, SpectrumSeries};
use kerrcomb::spontaneous::{
    classify_lineshape, default_grid, sidemode_flux, spectrum_envelope, spontaneous_spectrum,
    total_spontaneous_power, write_flux_csv, LineShapeKind, SfwmParams, SpontaneousError,
};
use kerrcomb::squeezing::{
    analytic_three_mode_spectra, default_omega_grid, optimize_quadrature_angle,
    photon_number_difference_spectrum, quadrature_sweep, AngleOptions, SqueezingError,
};
use kerrcomb::steady_state::{
    count_intensity_maxima, find_steady_state, solve_flat_state, write_intensity_csv,
    write_modes_csv, BranchChoice, CombState, ModalParams, Pattern, SolveOptions, SteadyStateError,
};
use kerrcomb::units::{self, derive_loss_budget, UnitsError};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Units(#[from] UnitsError),
    #[error("steady state: {0}")]
    SteadyState(#[from] SteadyStateError),
    #[error("linearization: {0}")]
    Linearization(#[from] LinearizationError),
    #[error("squeezing: {0}")]
    Squeezing(#[from] SqueezingError),
    #[error("spontaneous emission: {0}")]
    Spontaneous(#[from] SpontaneousError),
    #[error("audit: {0}")]
    Audit(#[from] AuditError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Run a scenario (and its sweep, if any) into `dir`. The returned report is
/// also written to `dir/report.json`; its status says whether all runs
/// succeeded.
pub fn run_scenario(scenario: &Scenario, dir: &Path, threads: usize) -> Result<Report, RunError> {
    let start = Instant::now();
    create_dir(dir)?;
    let runs = scenario.expand_sweep()?;
    let mut report = match &scenario.sweep {
        None => run_single(scenario, dir, threads),
        Some(sw) => {
            let mut top = Report::new(scenario, threads);
            write_text(&dir.join("scenario.toml"), &scenario.to_toml())?;
            let mut subs = Vec::with_capacity(runs.len());
            for (i, (value, sub)) in runs.iter().enumerate() {
                let name = format!("sweep_{i:02}");
                let r = run_single(sub, &dir.join(&name), threads);
                subs.push(SubRun::from_report(value.unwrap_or(f64::NAN), &name, &r));
                if r.status == Status::Error && top.error.is_none() {
                    top.status = Status::Error;
                    top.error = Some(format!("{name}: {}", r.error.clone().unwrap_or_default()));
                }
            }
            top.sweep = Some(SweepRecord {
                parameter: sw.parameter.clone(),
                values: sw.values.clone(),
                runs: subs,
            });
            top
        }
    };
    report.runtime_seconds = start.elapsed().as_secs_f64();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// One scenario without sweep. Compute errors end the run and are recorded
/// in the report rather than returned.
pub fn run_single(scenario: &Scenario, dir: &Path, threads: usize) -> Report {
    let start = Instant::now();
    let mut report = Report::new(scenario, threads);
    let result = create_dir(dir)
        .and_then(|_| write_text(&dir.join("scenario.toml"), &scenario.to_toml()))
        .and_then(|_| execute(scenario, dir, &mut report));
    if let Err(e) = result {
        report.status = Status::Error;
        report.error = Some(e.to_string());
    }
    report.runtime_seconds = start.elapsed().as_secs_f64();
    // a failure to write the report itself has nowhere better to go
    let _ = write_json(&dir.join("report.json"), &report);
    report
}

struct Ctx<'a> {
    dir: &'a Path,
    hash: String,
}

impl Ctx<'_> {
    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn record(
        &self,
        report: &mut Report,
        product: Product,
        files: Vec<String>,
        started: Instant,
        provenance: &str,
        details: Value,
    ) -> Result<(), RunError> {
        let rec = ProductRecord {
            product: product.name().to_string(),
            files,
            inputs_sha256: self.hash.clone(),
            runtime_seconds: started.elapsed().as_secs_f64(),
            provenance: format!("kerrcomb {} {}", env!("CARGO_PKG_VERSION"), provenance),
            details,
        };
        write_json(&self.path(&format!("{}.json", product.name())), &rec)?;
        report.products.push(rec);
        Ok(())
    }
}

fn execute(scenario: &Scenario, dir: &Path, report: &mut Report) -> Result<(), RunError> {
    let ctx = Ctx {
        dir,
        hash: report.inputs_sha256.clone(),
    };
    report.derived = Some(derived(scenario)?);
    match scenario.mode {
        Mode::BelowThreshold => below_threshold(scenario, &ctx, report),
        Mode::AboveThreshold => above_threshold(scenario, &ctx, report),
        Mode::HamiltonianAudit => hamiltonian_audit(scenario, &ctx, report),
    }
}

/// Quantities that let a reader check the inputs without rerunning.
fn derived(scenario: &Scenario) -> Result<Value, RunError> {
    Ok(match scenario.inputs()? {
        Inputs::Resonator(cfg) => {
            let b = derive_loss_budget(&cfg)?;
            let g0 = cfg.g0();
            let w = cfg.omega_l();
            let p_min = units::min_pump_power(&b, g0, w)?;
            let p_th = units::threshold_pump_power(&b, g0, w, cfg.detuning)?;
            let params = ModalParams::from_budget(&cfg, &b)?;
            let flat = solve_flat_state(&params, BranchChoice::Adiabatic);
            json!({
                "kappa_rad_per_s": b.kappa,
                "kappa_intrinsic_rad_per_s": b.kappa_i,
                "kappa_through_rad_per_s": b.kappa_t,
                "kappa_drop_rad_per_s": b.kappa_d,
                "rho": b.rho,
                "fsr_rad_per_s": b.fsr,
                "g0_rad_per_s": g0,
                "zeta2_rad_per_s": cfg.zeta2(),
                "pump_power_w": cfg.pump_power,
                "detuning_over_kappa": cfg.detuning / b.kappa,
                "p_min_w": p_min.power,
                "p_th_w": p_th,
                "pump_over_threshold": cfg.pump_power / p_th,
                "predicted_roll_order": units::predicted_roll_order(cfg.detuning, b.kappa, cfg.zeta2()).ok(),
                "alpha": params.alpha(),
                "beta": params.beta(),
                "f_squared": params.f_squared(),
                "flat_photons": flat.photons(),
                "g_over_kappa": g0 * flat.photons() / b.kappa,
            })
        }
        Inputs::Rates(r) => {
            let p = SfwmParams::from_rates(1.0, r.rho, r.sigma, r.zeta2, r.g);
            json!({
                "kappa": 1.0,
                "rho": r.rho,
                "g_over_kappa": r.g,
                "envelope_peak": spectrum_envelope(&p, 0..=0).predicted_peak,
            })
        }
        Inputs::Normalized(n) => {
            let p = ModalParams::normalized(n.alpha, n.beta, n.f, n.rho);
            json!({
                "kappa": 1.0,
                "rho": n.rho,
                "alpha": n.alpha,
                "beta": n.beta,
                "f_squared": n.f * n.f,
                "f_squared_threshold": 1.0 + (1.0 - n.alpha).powi(2),
                "predicted_roll_order": units::predicted_roll_order(p.sigma, p.kappa, p.zeta2).ok(),
            })
        }
        Inputs::None => Value::Null,
    })
}

fn below_threshold(scenario: &Scenario, ctx: &Ctx, report: &mut Report) -> Result<(), RunError> {
    let (p, modal) = match scenario.inputs()? {
        Inputs::Rates(r) => (
            SfwmParams::from_rates(1.0, r.rho, r.sigma, r.zeta2, r.g),
            None,
        ),
        Inputs::Resonator(cfg) => {
            let params = ModalParams::from_config(&cfg)?;
            let flat = solve_flat_state(&params, BranchChoice::Adiabatic);
            (
                SfwmParams::from_flat(&params, &flat, cfg.hbar_omega()),
                Some((params, cfg.hbar_omega())),
            )
        }
        _ => return Err(RunError::Other("below-threshold inputs missing".into())),
    };
    let k = p.kappa;
    let sec = &scenario.spectrum;
    for &product in &scenario.outputs {
        let t = Instant::now();
        match product {
            Product::Spectrum => {
                let mut files = vec![];
                let mut lines = vec![];
                for &l in &sec.modes {
                    let grid = match sec.omega_max {
                        Some(m) => linspace(-m, m, sec.points),
                        None => default_grid(&p, l),
                    };
                    let s = spontaneous_spectrum(&p, l, &grid)?;
                    let file = format!("spectrum_l{l}.csv");
                    write_series(&ctx.path(&file), &s, "S_sp_dimensionless")?;
                    let shape = classify_lineshape(&p, l);
                    lines.push(json!({
                        "l": l,
                        "file": file,
                        "lineshape": shape.kind,
                        "peak_omega_over_kappa": shape.peak_frequencies.iter().map(|w| w / k).collect::<Vec<_>>(),
                        "peak_value": shape.peak_value,
                        "grid_maxima_omega_over_kappa": grid_maxima(&s),
                    }));
                    files.push(file);
                }
                ctx.record(
                    report,
                    product,
                    files,
                    t,
                    "spontaneous::spontaneous_spectrum",
                    json!({ "modes": lines }),
                )?;
            }
            Product::Envelope => {
                let [a, b] = sec.envelope_range;
                let env = spectrum_envelope(&p, a..=b);
                let file = "envelope.csv".to_string();
                let mut w = create(&ctx.path(&file))?;
                env.write_csv(&mut w)?;
                let all_double = env.kinds.iter().all(|k| *k == LineShapeKind::DoublePeaked);
                ctx.record(
                    report,
                    product,
                    vec![file],
                    t,
                    "spontaneous::spectrum_envelope",
                    json!({
                        "peaks": env.peaks,
                        "predicted_peak": env.predicted_peak,
                        "all_double_peaked": all_double,
                    }),
                )?;
            }
            Product::FluxTable => {
                let [a, b] = sec.flux_range;
                let rows = (a..=b)
                    .map(|l| sidemode_flux(&p, l))
                    .collect::<Result<Vec<_>, _>>()?;
                let file = "flux.csv".to_string();
                write_flux_csv(&rows, create(&ctx.path(&file))?)?;
                let total_rate: f64 = rows.iter().map(|r| r.rate).sum();
                let total_power = match &modal {
                    Some((params, hw)) => match total_spontaneous_power(params, *hw) {
                        Ok(tp) => json!({
                            "closed_form_w": tp.closed_form,
                            "printed_form_w": tp.printed_form,
                            "discrete_sum_w": tp.full_sum(),
                            "l_max": tp.l_max,
                        }),
                        Err(e) => json!({ "unavailable": e.to_string() }),
                    },
                    None => Value::Null,
                };
                ctx.record(report, product, vec![file], t, "spontaneous::sidemode_flux", json!({
                    "rate_sum_over_table": total_rate,
                    "rate_units": if modal.is_some() { "photons/s" } else { "kappa (photons per 1/kappa)" },
                    "very_weak_total_power": total_power,
                }))?;
            }
            other => {
                return Err(ScenarioError::ProductMode {
                    product: other,
                    mode: scenario.mode,
                }
                .into())
            }
        }
    }
    Ok(())
}

fn above_threshold(scenario: &Scenario, ctx: &Ctx, report: &mut Report) -> Result<(), RunError> {
    let params = scenario.modal_params()?;
    let solver = &scenario.solver;
    let opts = SolveOptions {
        step: solver.step,
        max_horizon: solver.max_horizon,
        ..SolveOptions::default()
    };
    let t = Instant::now();
    let state = find_steady_state(&params, &solver.seed(scenario.seed), solver.k, &opts)?;
    write_modes_csv(&state, create(&ctx.path("modes.csv"))?)?;
    write_intensity_csv(
        &state,
        solver.intensity_points,
        create(&ctx.path("intensity.csv"))?,
    )?;
    report.state = Some(state_summary(&state, solver.intensity_points, t)?);

    for &product in &scenario.outputs {
        let t = Instant::now();
        match product {
            Product::Stability => {
                let jac = build_modal_jacobian(&state)?;
                let spec = stability_spectrum(&jac)?;
                let file = "stability_eigenvalues.csv".to_string();
                let mut wr = csv::Writer::from_writer(create(&ctx.path(&file))?);
                wr.write_record(["re_lambda_over_kappa", "im_lambda_over_kappa"])?;
                for z in &spec.eigenvalues {
                    wr.write_record([fmt(z.re / params.kappa), fmt(z.im / params.kappa)])?;
                }
                wr.flush().map_err(|e| io_err(&ctx.path(&file), e))?;
                ctx.record(
                    report,
                    product,
                    vec![file],
                    t,
                    "linearization::stability_spectrum",
                    json!({
                        "max_re_over_kappa": spec.max_real / params.kappa,
                        "stable": spec.stable,
                        "blocks": spec.blocks,
                    }),
                )?;
            }
            Product::QuadratureSpectrum => {
                let (files, details) = quadrature(scenario, ctx, &state, &params)?;
                ctx.record(
                    report,
                    product,
                    files,
                    t,
                    "squeezing::quadrature_sweep",
                    details,
                )?;
            }
            Product::NumberDifference => {
                let sec = &scenario.number_difference;
                let grid = linspace(-sec.omega_max, sec.omega_max, sec.points);
                let s = photon_number_difference_spectrum(params.rho, &grid)?;
                let file = "number_difference.csv".to_string();
                write_series(&ctx.path(&file), &s, "S_N_shot_noise_units")?;
                ctx.record(
                    report,
                    product,
                    vec![file],
                    t,
                    "squeezing::photon_number_difference_spectrum",
                    json!({
                        "rho": params.rho,
                        "floor": 1.0 - params.rho,
                    }),
                )?;
            }
            other => {
                return Err(ScenarioError::ProductMode {
                    product: other,
                    mode: scenario.mode,
                }
                .into())
            }
        }
    }
    Ok(())
}

fn state_summary(state: &CombState, points: usize, t: Instant) -> Result<Value, RunError> {
    let roll = match state.pattern {
        Pattern::Roll(l) => Some(l),
        _ => None,
    };
    Ok(json!({
        "pattern": state.pattern.to_string(),
        "roll_order": roll,
        "k": state.k,
        "residual_norm": state.residual_norm,
        "edge_ratio": state.edge_ratio(),
        "photon_number": state.photon_number(),
        "intensity_maxima": count_intensity_maxima(state, points)?,
        "seed": state.seed,
        "solve_seconds": t.elapsed().as_secs_f64(),
        "files": ["modes.csv", "intensity.csv"],
    }))
}

fn quadrature(
    scenario: &Scenario,
    ctx: &Ctx,
    state: &CombState,
    params: &ModalParams,
) -> Result<(Vec<String>, Value), RunError> {
    let sec = &scenario.quadrature;
    let q = build_quadrature_jacobian(state)?;
    let roll = match state.pattern {
        Pattern::Roll(l) => Some(l as usize),
        _ => None,
    };
    let pairs = if sec.pairs.is_empty() {
        vec![roll.unwrap_or(1)]
    } else {
        sec.pairs.clone()
    };
    let grid = default_omega_grid(sec.omega_min, sec.omega_max, sec.points_per_side);
    let sweep = quadrature_sweep(&q, params.rho, &grid, &pairs)?;
    let opts = AngleOptions {
        band: (sec.band[0], sec.band[1]),
        scan_points: sec.scan_points,
        ..AngleOptions::default()
    };
    let mut files = vec![];
    let mut per_pair = vec![];
    for &l in &pairs {
        let opt = optimize_quadrature_angle(&sweep, l, &opts)?;
        let file = format!("quadrature_l{l}_optimized.csv");
        write_series(&ctx.path(&file), &opt.spectrum.series, "S_shot_noise_units")?;
        files.push(file.clone());
        let mut curves = vec![json!({
            "file": file,
            "delta_phi": opt.delta_phi,
            "min": min_record(&opt.spectrum.series),
            "divergent_at_zero": divergent_at_zero(&opt.spectrum.series, sec.band[0]),
        })];
        for (i, &d) in sec.offsets.iter().enumerate() {
            let s = sweep.spectrum(l, d)?;
            let file = format!("quadrature_l{l}_offset{i}.csv");
            write_series(&ctx.path(&file), &s.series, "S_shot_noise_units")?;
            curves.push(json!({
                "file": file,
                "delta_phi": d,
                "min": min_record(&s.series),
                "divergent_at_zero": divergent_at_zero(&s.series, sec.band[0]),
            }));
            files.push(file);
        }
        let mut entry = json!({
            "l": l,
            "phi_l": opt.phi_l,
            "delta_phi": opt.delta_phi,
            "objective": opt.objective,
            "multi_minimum": opt.multi_minimum,
            "degenerate": opt.degenerate,
            "curves": curves,
        });
        if roll == Some(l) {
            let r = triplet_rates(state)?;
            let (sa, sp) = analytic_three_mode_spectra(
                r.kappa_a,
                r.kappa_p,
                params.rho,
                params.kappa,
                &sweep.omega,
            );
            let file = format!("three_mode_l{l}.csv");
            let mut wr = csv::Writer::from_writer(create(&ctx.path(&file))?);
            wr.write_record([
                "omega_over_kappa",
                "S_a_shot_noise_units",
                "S_p_shot_noise_units",
            ])?;
            for i in 0..sa.omega.len() {
                wr.write_record([fmt(sa.omega[i]), fmt(sa.values[i]), fmt(sp.values[i])])?;
            }
            wr.flush().map_err(|e| io_err(&ctx.path(&file), e))?;
            let dev = |lo: f64| {
                opt.spectrum
                    .series
                    .omega
                    .iter()
                    .zip(&opt.spectrum.series.values)
                    .zip(&sa.values)
                    .filter(|((w, _), _)| w.abs() >= lo && w.abs() <= 6.0)
                    .map(|((_, s), a)| (s - a).abs())
                    .fold(0.0, f64::max)
            };
            entry["three_mode"] = json!({
                "file": file,
                "kappa_a_over_kappa": r.kappa_a / params.kappa,
                "kappa_p_over_kappa": r.kappa_p / params.kappa,
                "max_abs_deviation_abs_omega_le_6": dev(0.0),
                "max_abs_deviation_band_to_6": dev(sec.band[0]),
            });
            files.push(file);
        }
        per_pair.push(entry);
    }
    Ok((
        files,
        json!({
            "pairs": per_pair,
            "skipped_omega_over_kappa": sweep.skipped,
            "theta_shift": q.theta_shift,
        }),
    ))
}

fn min_record(s: &SpectrumSeries) -> Value {
    let (w, v) = s.min();
    json!({ "omega_over_kappa": w, "value": v })
}

/// Heuristic: the value at the smallest |ω| exceeds ten times the value at
/// the lower edge of the angle band.
fn divergent_at_zero(s: &SpectrumSeries, band_low: f64) -> bool {
    let nearest = |target: f64| {
        s.omega
            .iter()
            .zip(&s.values)
            .min_by(|a, b| {
                (a.0.abs() - target)
                    .abs()
                    .total_cmp(&(b.0.abs() - target).abs())
            })
            .map(|(_, v)| *v)
    };
    match (nearest(0.0), nearest(band_low)) {
        (Some(zero), Some(edge)) => zero > 10.0 * edge.abs().max(1.0),
        _ => false,
    }
}

fn grid_maxima(s: &SpectrumSeries) -> Vec<f64> {
    let v = &s.values;
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
        .map(|i| s.omega[i])
        .collect()
}

fn hamiltonian_audit(scenario: &Scenario, ctx: &Ctx, report: &mut Report) -> Result<(), RunError> {
    let sec = &scenario.audit;
    for &product in &scenario.outputs {
        if product != Product::Audit {
            return Err(ScenarioError::ProductMode {
                product,
                mode: scenario.mode,
            }
            .into());
        }
        let t = Instant::now();
        let mut files = vec![];

        let file = "audit_monomials.csv".to_string();
        let mut wr = csv::Writer::from_writer(create(&ctx.path(&file))?);
        wr.write_record(["K", "monomials", "formula", "spm", "cpm", "fwm"])?;
        let mut monomials_ok = true;
        for k in 0..=sec.monomial_k_max {
            let set = enumerate_monomials(k)?;
            let formula = monomial_count_formula(k);
            monomials_ok &= set.len() as u64 == formula;
            let c = |t: Tag| set.counts.get(&t).copied().unwrap_or(0).to_string();
            wr.write_record([
                k.to_string(),
                set.len().to_string(),
                formula.to_string(),
                c(Tag::Spm),
                c(Tag::Cpm),
                c(Tag::Fwm),
            ])?;
            let text = format!("monomials_K{k}.txt");
            set.write_text(create(&ctx.path(&text))?)?;
            files.push(text);
        }
        wr.flush().map_err(|e| io_err(&ctx.path(&file), e))?;
        files.insert(0, file);

        let file = "audit_commutators.csv".to_string();
        let mut wr = csv::Writer::from_writer(create(&ctx.path(&file))?);
        wr.write_record(["K", "l", "count", "formula"])?;
        let mut commutators_ok = true;
        for k in 0..=sec.commutator_k_max {
            for l in -(k as i32)..=k as i32 {
                let n = commutator_mode_count(k, l)?;
                let f = commutator_count_formula(k, l);
                commutators_ok &= n as i64 == f;
                wr.write_record([k.to_string(), l.to_string(), n.to_string(), f.to_string()])?;
            }
        }
        wr.flush().map_err(|e| io_err(&ctx.path(&file), e))?;
        files.push(file);

        let file = "audit_number_difference.csv".to_string();
        let mut wr = csv::Writer::from_writer(create(&ctx.path(&file))?);
        wr.write_record([
            "K",
            "l",
            "spm_zero",
            "cpm_zero",
            "fwm_zero",
            "fwm_residual_terms",
        ])?;
        let mut spm_cpm_zero = true;
        for k in 1..=sec.number_difference_k_max {
            for l in 1..=k as i32 {
                let r = number_difference_commutators(k, l)?;
                spm_cpm_zero &= r.spm_zero && r.cpm_zero;
                wr.write_record([
                    k.to_string(),
                    l.to_string(),
                    r.spm_zero.to_string(),
                    r.cpm_zero.to_string(),
                    r.fwm_zero.to_string(),
                    r.fwm_residual.len().to_string(),
                ])?;
            }
        }
        wr.flush().map_err(|e| io_err(&ctx.path(&file), e))?;
        files.push(file);

        ctx.record(
            report,
            product,
            files,
            t,
            "hamiltonian_audit",
            json!({
                "max_k": audit::MAX_K,
                "monomial_counts_match_formula": monomials_ok,
                "commutator_counts_match_formula": commutators_ok,
                "spm_and_cpm_conserve_number_difference": spm_cpm_zero,
            }),
        )?;
    }
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_series(path: &Path, s: &SpectrumSeries, header: &str) -> Result<(), RunError> {
    s.write_csv(header, create(path)?)?;
    Ok(())
}

impl Report {
    fn new(scenario: &Scenario, threads: usize) -> Report {
        let toml_text = scenario.to_toml();
        Report {
            schema_version: crate::scenario::SCHEMA_VERSION,
            tool: format!("kerrcomb {}", env!("CARGO_PKG_VERSION")),
            name: scenario.name.clone(),
            mode: scenario.mode.to_string(),
            status: Status::Ok,
            error: None,
            seed: scenario.seed,
            threads,
            inputs_sha256: sha256_hex(&toml_text),
            runtime_seconds: 0.0,
            units: Units::default(),
            derived: None,
            state: None,
            products: vec![],
            sweep: None,
            scenario_file: "scenario.toml".into(),
            scenario: serde_json::to_value(scenario).unwrap_or(Value::Null),
        }
    }
}
