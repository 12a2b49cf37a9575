use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use reluphase::datasets::{default_1d, from_idx, validate, Dataset};
use reluphase::dynamics::{integrate, simulate_original, theory_risk_tolerance, FlowConfig, RunResult};
use reluphase::features::{condensation_summary, extract_features, tagged_scatter_csv, CondensationSummary};
use reluphase::kernels::{decay_rate, gram_finite, gram_limit_closed, gram_limit_mc};
use reluphase::network::{empirical_risk, init_params, InitConfig, NetworkParams, SnapshotHeader};
use reluphase::scaling::{preset, PowerLaw, Preset, ScalingSpec};
use reluphase::scan::{scan, ScanConfig, ScanGrid};
use reluphase::theory::{
    check_decay_bound, check_initial_norms, check_initial_param_bound, check_initial_risk, check_neuron_bound,
    check_rd_bounds, check_rd_growth, linear_decay_rate, reports_csv, BoundReport,
};

use crate::output::Outputs;
use crate::{
    Command, CondenseArgs, DatasetArgs, FlowArgs, ModelArgs, PresetsArgs, ScanArgs, SpectrumArgs, TrainArgs, VerifyArgs,
};

/// Bounds whose failure makes `verify` exit non-zero. The others compare
/// against asymptotic rates and are reported only.
const HARD_CHECKS: [&str; 2] = ["neuron-amplitude", "initial-risk"];

/// Returns `Ok(false)` when `verify` finds a failing hard check.
pub fn run(command: Command, name: &str, settings: &str) -> Result<bool> {
    let common = match &command {
        Command::Presets(a) => &a.common,
        Command::Train(a) => &a.common,
        Command::Scan(a) => &a.common,
        Command::Spectrum(a) => &a.common,
        Command::Condense(a) => &a.common,
        Command::Verify(a) => &a.common,
    };
    if common.print_config {
        print!("{settings}");
        return Ok(true);
    }
    let mut out = Outputs::new(common.out_dir.clone(), name, settings);
    let ok = match command {
        Command::Presets(a) => presets(&a, &mut out).map(|_| true),
        Command::Train(a) => train(&a, &mut out).map(|_| true),
        Command::Scan(a) => scan_grid(&a, &mut out).map(|_| true),
        Command::Spectrum(a) => spectrum(&a, &mut out).map(|_| true),
        Command::Condense(a) => condense(&a, &mut out).map(|_| true),
        Command::Verify(a) => verify(&a, &mut out),
    }?;
    out.finish()?;
    Ok(ok)
}

fn load_dataset(args: &DatasetArgs) -> Result<Dataset> {
    let spec = args.dataset.as_str();
    let dataset = match spec {
        "builtin:default" | "builtin:fig2" => default_1d(),
        _ if spec.starts_with("builtin:") => bail!("unknown builtin dataset `{spec}`"),
        _ => {
            if let Some(rest) = spec.strip_prefix("idx:") {
                let parts: Vec<&str> = rest.split(',').collect();
                ensure!(
                    parts.len() == 2 || parts.len() == 3,
                    "expected idx:IMAGES,LABELS[,COUNT], got `{spec}`"
                );
                let count = match parts.get(2) {
                    Some(c) => c.parse().with_context(|| format!("bad IDX count `{c}`"))?,
                    None => usize::MAX,
                };
                from_idx(Path::new(parts[0]), Path::new(parts[1]), count, args.label_scale)?
            } else {
                let text = fs::read_to_string(spec).with_context(|| format!("reading dataset {spec}"))?;
                Dataset::from_csv(&text)?
            }
        }
    };
    let report = validate(&dataset, args.theory);
    if !report.passed() {
        let msg = report
            .violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        if args.theory {
            bail!("dataset fails the theory-mode checks: {msg}");
        }
        eprintln!("warning: {msg}");
    }
    Ok(dataset)
}

fn model_spec(args: &ModelArgs, dim: usize) -> Result<ScalingSpec> {
    if let Some(name) = &args.preset {
        let p: Preset = name.parse()?;
        return Ok(preset(p, dim, args.beta_exponent)?);
    }
    let (Some(g), Some(gp)) = (args.gamma, args.gamma_prime) else {
        bail!("give --preset or both --gamma and --gamma-prime");
    };
    let (ck, ckp) = (args.kappa_coeff, args.kappa_prime_coeff);
    Ok(match args.beta_exponent {
        None => ScalingSpec::from_kappas(PowerLaw::new(ck, -g)?, PowerLaw::new(ckp, -gp)?),
        Some(b) => ScalingSpec::new(
            PowerLaw::new(ckp / ck, g - gp - 2.0 * b)?,
            PowerLaw::new(ckp, -gp - b)?,
            PowerLaw::new(1.0, -b)?,
        ),
    })
}

fn use_asi(mode: &str, gamma: f64) -> Result<bool> {
    match mode {
        "auto" => Ok(gamma <= 0.5),
        "on" => Ok(true),
        "off" => Ok(false),
        other => bail!("--asi takes auto, on or off, got `{other}`"),
    }
}

/// `InitConfig` for total width `m`; with ASI the base draw has `m/2` neurons.
fn init_config(m: usize, d: usize, seed: u64, asi: bool) -> Result<InitConfig> {
    ensure!(
        !asi || m % 2 == 0,
        "antisymmetric initialization needs an even width, got {m}"
    );
    Ok(InitConfig {
        m: if asi { m / 2 } else { m },
        d,
        seed,
        use_asi: asi,
    })
}

fn flow_config(args: &FlowArgs, kappa: f64, r0: f64, n: usize, theory: bool) -> FlowConfig {
    let mut tol = args.risk_tolerance.unwrap_or(0.0).max(r0 * args.relative_tolerance);
    if theory && args.risk_tolerance.is_none() {
        tol = tol.max(theory_risk_tolerance(r0, n));
    }
    FlowConfig {
        initial_step: args.initial_step,
        max_time: args.max_time.unwrap_or(f64::INFINITY).min(args.horizon / kappa),
        risk_tolerance: tol,
        record_stride: args.record_stride,
        max_steps: args.max_steps,
        adaptive: !args.fixed_step,
        max_step: args.max_step,
        snapshot_stride: args.snapshot_stride,
    }
}

struct Trained {
    run: RunResult,
    seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn train_one(
    spec: &ScalingSpec,
    dataset: &Dataset,
    flow: &FlowArgs,
    m: usize,
    seed: u64,
    asi: bool,
    original: bool,
    theory: bool,
) -> Result<Trained> {
    let (kappa, kappa_prime) = spec.realize(m);
    let init = init_config(m, dataset.d(), seed, asi)?;
    let params0 = init_params(&init)?;
    let r0 = empirical_risk(&params0, kappa, dataset)?;
    let config = flow_config(flow, kappa, r0, dataset.n(), theory);
    let run = if original {
        simulate_original(spec, &init, dataset, &config)?
    } else {
        integrate(&params0, kappa, kappa_prime, dataset, &config)?
    };
    Ok(Trained { run, seed })
}

fn snapshot_bytes(params: &NetworkParams, header: SnapshotHeader) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    params.write_snapshot(&mut buf, header)?;
    Ok(buf)
}

fn read_snapshot(path: &Path) -> Result<(NetworkParams, SnapshotHeader)> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(NetworkParams::read_snapshot(std::io::BufReader::new(file))?)
}

fn condensation_csv(rows: &[(&str, &CondensationSummary)]) -> String {
    let mut out = String::from("tag,active,clusters,entropy,amplitude_threshold,cosine_tolerance\n");
    for (tag, s) in rows {
        out.push_str(&format!(
            "{tag},{},{},{:.16e},{:.16e},{:.16e}\n",
            s.active_count, s.cluster_count, s.angular_entropy, s.amplitude_threshold, s.cosine_tolerance
        ));
    }
    out
}

fn short(p: &PowerLaw) -> String {
    format!("{:.4}·m^{}", p.coeff, p.exponent + 0.0)
}

fn presets(args: &PresetsArgs, out: &mut Outputs) -> Result<()> {
    let mut csv = String::from("preset,alpha,beta1,beta2,kappa,kappa_prime,gamma,gamma_prime,regime\n");
    println!(
        "{:<11} {:<15} {:<15} {:<15} {:<15} {:<15} {:>6} {:>7}  regime",
        "preset", "alpha", "beta1", "beta2", "kappa", "kappa'", "gamma", "gamma'"
    );
    for p in Preset::ALL {
        let spec = preset(p, args.dim, Some(args.beta_exponent))?;
        let c = spec.coordinates();
        let (g, gp) = (c.gamma + 0.0, c.gamma_prime + 0.0);
        let regime = c.regime();
        println!(
            "{:<11} {:<15} {:<15} {:<15} {:<15} {:<15} {:>6.3} {:>7.3}  {regime}",
            p.name(),
            short(&spec.alpha),
            short(&spec.beta1),
            short(&spec.beta2),
            short(&spec.kappa()),
            short(&spec.kappa_prime()),
            g,
            gp
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:?},{:?},{regime}\n",
            p.name(),
            spec.alpha,
            spec.beta1,
            spec.beta2,
            spec.kappa(),
            spec.kappa_prime(),
            g,
            gp
        ));
    }
    out.write("presets.csv", csv.as_bytes())
}

fn train(args: &TrainArgs, out: &mut Outputs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let spec = model_spec(&args.model, dataset.d())?;
    let coords = spec.coordinates();
    let asi = use_asi(&args.asi, coords.gamma)?;
    let t = train_one(
        &spec,
        &dataset,
        &args.flow,
        args.m,
        args.seed,
        asi,
        args.original,
        args.data.theory,
    )?;
    let run = &t.run;
    let header = SnapshotHeader {
        seed: t.seed,
        kappa: run.kappa,
        kappa_prime: run.kappa_prime,
    };
    out.note("dataset", &args.data.dataset);
    out.note("dataset_fingerprint", dataset.fingerprint());
    out.note("seed", t.seed);

    out.write("trajectory.csv", run.trajectory.to_csv().as_bytes())?;
    out.write("initial.snap", &snapshot_bytes(&run.initial_params, header)?)?;
    out.write("final.snap", &snapshot_bytes(&run.final_params, header)?)?;
    out.write("final_params.csv", run.final_params.to_csv().as_bytes())?;
    for (i, s) in run.snapshots.iter().enumerate() {
        out.write(&format!("snapshots/{i:05}.snap"), &snapshot_bytes(&s.params, header)?)?;
    }
    let initial = extract_features(&run.initial_params);
    let final_ = extract_features(&run.final_params);
    out.write(
        "scatter.csv",
        tagged_scatter_csv(&[("initial", &initial), ("final", &final_)])?.as_bytes(),
    )?;
    let fraction = reluphase::features::DEFAULT_AMPLITUDE_FRACTION;
    let tolerance = reluphase::features::DEFAULT_COSINE_TOLERANCE;
    let s0 = condensation_summary(&initial, fraction, tolerance)?;
    let s1 = condensation_summary(&final_, fraction, tolerance)?;
    out.write(
        "condensation.csv",
        condensation_csv(&[("initial", &s0), ("final", &s1)]).as_bytes(),
    )?;

    println!(
        "cell        gamma={} gamma'={} ({})",
        coords.gamma + 0.0,
        coords.gamma_prime + 0.0,
        coords.regime()
    );
    println!("width       {} (asi: {asi})", run.final_params.m());
    println!("kappa       {:.6e}  kappa' {:.6e}", run.kappa, run.kappa_prime);
    println!("risk        {:.6e} -> {:.6e}", run.initial_risk(), run.final_risk());
    println!(
        "time        {:.6e} after {} steps ({} rejected), stop: {}",
        run.trajectory.times.last().copied().unwrap_or(0.0),
        run.accepted_steps,
        run.rejected_steps,
        run.stop_reason.as_str()
    );
    println!(
        "sup RD      w {:.6e}  theta {:.6e}  a {:.6e}",
        run.sup_rd_w, run.sup_rd_theta, run.sup_rd_a
    );
    println!(
        "clusters    {} -> {}  entropy {:.4} -> {:.4}",
        s0.cluster_count, s1.cluster_count, s0.angular_entropy, s1.angular_entropy
    );
    Ok(())
}

fn scan_grid(args: &ScanArgs, out: &mut Outputs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let grid = ScanGrid {
        gamma_values: args.gamma.clone(),
        gamma_prime_values: args.gamma_prime.clone(),
        widths: args.widths.clone(),
        replicates: args.replicates,
        base_seed: args.seed,
    };
    grid.validate()?;
    for w in grid.warnings() {
        eprintln!("warning: {w}");
    }
    let cache_dir: Option<PathBuf> = if args.no_cache {
        None
    } else {
        args.cache_dir
            .clone()
            .or_else(|| args.common.out_dir.as_ref().map(|d| d.join("cache")))
    };
    let defaults = ScanConfig::default();
    let config = ScanConfig {
        flow: FlowConfig {
            max_steps: args.max_steps,
            ..defaults.flow
        },
        horizon: Some(args.horizon),
        relative_tolerance: args.relative_tolerance,
        kappa_coeff: args.kappa_coeff,
        kappa_prime_coeff: args.kappa_prime_coeff,
        beta_exponent: args.beta_exponent,
        cache_dir,
        jobs: args.jobs,
    };
    let map = scan(&grid, &dataset, &config)?;
    out.note("dataset", &args.data.dataset);
    out.note("dataset_fingerprint", dataset.fingerprint());
    out.note("seed", args.seed);
    out.note("settings_hash", config.settings_hash(args.seed, &dataset));
    out.write("phase_map.csv", map.to_csv().as_bytes())?;
    out.write("summary.csv", map.summary_csv().as_bytes())?;
    out.write("replicates.csv", map.replicates_csv().as_bytes())?;
    out.write("zeros.csv", map.zeros_csv().as_bytes())?;
    for cell in &map.cells {
        for e in &cell.errors {
            eprintln!(
                "warning: gamma={} gamma'={}: {e}",
                cell.coords.gamma, cell.coords.gamma_prime
            );
        }
    }
    print!("{}", map.to_csv());
    for row in &map.zeros {
        println!("# gamma'={}: S_w zeros at {:?}", row.gamma_prime, row.zeros);
    }
    Ok(())
}

fn spectrum(args: &SpectrumArgs, out: &mut Outputs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let limit = gram_limit_closed(&dataset)?;
    out.note("dataset", &args.data.dataset);
    out.note("dataset_fingerprint", dataset.fingerprint());
    out.write("k_a.csv", limit.k_a.to_csv().as_bytes())?;
    out.write("k_w.csv", limit.k_w.to_csv().as_bytes())?;
    let mut rows = vec![
        ("lambda_a", limit.lambda_a),
        ("lambda_w", limit.lambda_w),
        ("lambda", limit.lambda),
    ];
    if args.mc_samples > 0 {
        let mc = gram_limit_mc(&dataset, args.mc_samples, args.seed)?;
        out.note("seed", args.seed);
        rows.push(("mc_lambda_a", mc.lambda_a));
        rows.push(("mc_lambda_w", mc.lambda_w));
        rows.push(("mc_distance_a", mc.k_a.frobenius_distance(&limit.k_a)));
        rows.push(("mc_distance_w", mc.k_w.frobenius_distance(&limit.k_w)));
    }
    if let Some(m) = args.m {
        let spec = model_spec(&args.model, dataset.d())?;
        let (kappa, kappa_prime) = spec.realize(m);
        let rates = decay_rate(m, kappa, kappa_prime, dataset.n(), limit.lambda_a, limit.lambda_w);
        rows.push(("kappa", kappa));
        rows.push(("kappa_prime", kappa_prime));
        rows.push(("rate_local", rates.local));
        rows.push(("rate_linear", rates.linear));
        let asi = spec.coordinates().gamma <= 0.5;
        let params0 = init_params(&init_config(m, dataset.d(), args.seed, asi)?)?;
        let finite = gram_finite(&params0, kappa, kappa_prime, &dataset)?;
        let (na, nw) = (finite.normalized_a(), finite.normalized_w());
        rows.push(("finite_distance_a", na.frobenius_distance(&limit.k_a)));
        rows.push(("finite_distance_w", nw.frobenius_distance(&limit.k_w)));
        out.write("g_a_normalized.csv", na.to_csv().as_bytes())?;
        out.write("g_w_normalized.csv", nw.to_csv().as_bytes())?;
    }
    let mut csv = String::from("quantity,value\n");
    for (k, v) in &rows {
        csv.push_str(&format!("{k},{v:.16e}\n"));
        println!("{k:<20} {v:.10e}");
    }
    out.write("spectrum.csv", csv.as_bytes())
}

fn condense(args: &CondenseArgs, out: &mut Outputs) -> Result<()> {
    let params = match (&args.snapshot, args.m) {
        (Some(path), _) => read_snapshot(path)?.0,
        (None, Some(m)) => init_params(&init_config(m, args.d, args.seed, args.asi)?)?,
        (None, None) => bail!("give --snapshot or --m"),
    };
    let current = extract_features(&params);
    let summary = condensation_summary(&current, args.amplitude_fraction, args.cosine_tolerance)?;
    let mut rows = vec![("current", summary.clone())];
    let mut clouds = Vec::new();
    let initial = match &args.initial {
        Some(path) => {
            let cloud = extract_features(&read_snapshot(path)?.0);
            rows.insert(
                0,
                (
                    "initial",
                    condensation_summary(&cloud, args.amplitude_fraction, args.cosine_tolerance)?,
                ),
            );
            Some(cloud)
        }
        None => None,
    };
    if let Some(c) = &initial {
        clouds.push(("initial", c));
    }
    clouds.push(("current", &current));
    let table: Vec<(&str, &CondensationSummary)> = rows.iter().map(|(t, s)| (*t, s)).collect();
    out.write("condensation.csv", condensation_csv(&table).as_bytes())?;
    out.write("scatter.csv", tagged_scatter_csv(&clouds)?.as_bytes())?;
    for (tag, s) in &rows {
        println!(
            "{tag:<8} active {:>6}  clusters {:>6}  entropy {:.4}",
            s.active_count, s.cluster_count, s.angular_entropy
        );
    }
    Ok(())
}

fn verify(args: &VerifyArgs, out: &mut Outputs) -> Result<bool> {
    let dataset = load_dataset(&args.data)?;
    let spec = model_spec(&args.model, dataset.d())?;
    let coords = spec.coordinates();
    let asi = coords.gamma <= 0.5;
    let mut widths = if args.widths.is_empty() {
        vec![args.m, 2 * args.m]
    } else {
        args.widths.clone()
    };
    if !widths.contains(&args.m) {
        widths.insert(0, args.m);
    }
    widths.sort_unstable();
    widths.dedup();
    let mut flow = args.flow.clone();
    if flow.snapshot_stride == 0 {
        flow.snapshot_stride = 100;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let runs: Vec<Trained> = pool.install(|| {
        use rayon::prelude::*;
        widths
            .par_iter()
            .map(|&m| train_one(&spec, &dataset, &flow, m, args.seed, asi, false, args.data.theory))
            .collect::<Result<Vec<_>>>()
    })?;
    let main = &runs[widths.iter().position(|&w| w == args.m).expect("main width present")].run;
    let n = dataset.n();
    let params0 = &main.initial_params;

    let mut reports: Vec<BoundReport> = vec![
        check_initial_param_bound(params0, args.delta)?,
        check_initial_norms(params0),
    ];
    let rate = linear_decay_rate(args.m, main.kappa, main.kappa_prime, &dataset)?;
    reports.push(check_decay_bound(main, rate, args.decay_tolerance));
    let refs: Vec<&RunResult> = runs.iter().map(|t| &t.run).collect();
    if refs.len() >= 2 {
        reports.push(if coords.gamma > 1.0 {
            check_rd_growth(&refs)?
        } else {
            check_rd_bounds(&refs, coords, args.rd_constant)?
        });
    }
    reports.push(check_neuron_bound(main, main.kappa_prime, args.residual_tolerance)?);
    if asi {
        reports.push(check_initial_risk(params0, main.kappa, &dataset)?);
    }
    let reports: Vec<BoundReport> = reports.into_iter().map(|r| r.with_seed(args.seed).with_n(n)).collect();

    out.note("dataset", &args.data.dataset);
    out.note("dataset_fingerprint", dataset.fingerprint());
    out.note("seed", args.seed);
    out.write("reports.csv", reports_csv(&reports).as_bytes())?;
    println!(
        "cell gamma={} gamma'={} ({}), widths {widths:?}",
        coords.gamma + 0.0,
        coords.gamma_prime + 0.0,
        coords.regime()
    );
    let mut ok = true;
    for r in &reports {
        let hard = HARD_CHECKS.contains(&r.bound_name);
        println!("{r}{}", if hard { "  [hard]" } else { "" });
        ok &= r.satisfied || !hard;
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(gamma: Option<f64>, gamma_prime: Option<f64>, preset: Option<&str>) -> ModelArgs {
        ModelArgs {
            gamma,
            gamma_prime,
            preset: preset.map(str::to_string),
            beta_exponent: None,
            kappa_coeff: 1.0,
            kappa_prime_coeff: 1.0,
        }
    }

    #[test]
    fn ntk_preset_matches_coordinates() {
        let a = model_spec(&model(None, None, Some("ntk")), 2).unwrap();
        let b = model_spec(&model(Some(0.5), Some(0.0), None), 2).unwrap();
        assert_eq!(a.realize(1000), b.realize(1000));
    }

    #[test]
    fn beta_realization_keeps_kappas() {
        let mut args = model(Some(1.25), Some(-0.5), None);
        let plain = model_spec(&args, 2).unwrap();
        args.beta_exponent = Some(0.5);
        let beta = model_spec(&args, 2).unwrap();
        let (k0, kp0) = plain.realize(4096);
        let (k1, kp1) = beta.realize(4096);
        assert!((k0 / k1 - 1.0).abs() < 1e-12 && (kp0 / kp1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_coordinates_is_an_error() {
        assert!(model_spec(&model(Some(1.0), None, None), 2).is_err());
    }

    #[test]
    fn asi_needs_even_width() {
        assert!(init_config(7, 2, 0, true).is_err());
        assert_eq!(init_config(8, 2, 0, true).unwrap().m, 4);
    }

    #[test]
    fn theory_tolerance_is_not_looser_than_relative() {
        let flow = FlowArgs {
            horizon: 200.0,
            max_time: None,
            risk_tolerance: None,
            relative_tolerance: 1e-6,
            max_steps: 10,
            initial_step: None,
            max_step: None,
            fixed_step: false,
            record_stride: 1,
            snapshot_stride: 0,
        };
        let plain = flow_config(&flow, 0.5, 1.0, 4, false);
        let theory = flow_config(&flow, 0.5, 1.0, 4, true);
        assert_eq!(plain.risk_tolerance, 1e-6);
        assert_eq!(theory.risk_tolerance, 1.0 / 128.0);
        assert_eq!(plain.max_time, 400.0);
    }
}
