mod args;
mod io;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use cadesh::baselines::{run_bench, BenchOptions};
use cadesh::eval::{
    evaluate, macro_average, run_grid, scenario_metrics, sensitivity_sweep, GridAxes, ScenarioOutcome,
};
use cadesh::filter2::ThresholdMode;
use cadesh::ingest::{ingest, IngestOptions, Recompute, SplitDays};
use cadesh::model::LabSite;
use cadesh::pipeline::{fit, train};
use cadesh::synth::{generate, SynthConfig};
use cadesh::{Error, ErrorClass, LabelClass, Result, StageTimings, Verdict};
use clap::Parser;
use serde::Serialize;

use args::*;
use io::*;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("cadesh: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cadesh: {}", e.to_string().replace('\n', " "));
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let recompute = match a.recompute.as_str() {
        "auto" => Recompute::Auto,
        "always" => Recompute::Always,
        "never" => Recompute::Never,
        other => return Err(Error::Config(format!("unknown recompute mode '{other}'"))),
    };
    let opts = IngestOptions {
        split: a.split.parse()?,
        use_partition_column: a.keep_partition,
        sanitize_min_port_count: a.sanitize_min_port_count,
        recompute,
        lab: LabSite { network_id: a.lab_network, device_id: a.lab_device },
    };
    let file = std::fs::File::open(&a.input)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", a.input.display())))?;
    let (parts, report) = ingest(std::io::BufReader::new(file), &opts)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_flows(&a.out_dir.join(TRAINING_FILE), &parts.training)?;
    write_flows(&a.out_dir.join(VALIDATION_FILE), &parts.validation)?;
    write_flows(&a.out_dir.join(TEST_FILE), &parts.test)?;
    write_json(&a.out_dir.join(REPORT_FILE), &report)?;
    print!("{}", report.to_json_line());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let training = read_partition(&a.data, TRAINING_FILE)?;
    let validation = read_partition(&a.data, VALIDATION_FILE)?;
    let mut timings = StageTimings::default();
    let model = if a.calibrate {
        fit(&training, &validation, &config, &mut timings)?
    } else {
        train(&training, &validation, &config, &mut timings)?
    };
    write_json(&a.out, &model)?;
    log::info!(
        "k* = {}, {} epochs, th_frequent = {}",
        model.filter2.k_star,
        model.filter1.history.epochs(),
        model.filter1.th_frequent
    );
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let mut model = read_model(&a.model)?;
    if let Some(p) = a.pctl_known {
        let mut cfg = model.config.clone();
        cfg.set("pctl_known", &p.to_string())?;
        cfg.validate()?;
        model.config = cfg;
    }
    let validation = read_partition(&a.data, VALIDATION_FILE)?;
    model.calibrate(&validation)?;
    write_json(a.out.as_deref().unwrap_or(&a.model), &model)
}

fn parse_mode(tau: Option<&str>, default: ThresholdMode) -> Result<ThresholdMode> {
    match tau {
        None => Ok(default),
        Some("none") => Ok(ThresholdMode::PerCluster),
        Some(s) => {
            let t: f64 = s.parse().map_err(|_| Error::Config(format!("invalid tau '{s}'")))?;
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("tau must lie in (0,1), got {t}")));
            }
            Ok(ThresholdMode::GlobalTanh(t))
        }
    }
}

fn write_verdicts(path: &Path, verdicts: &[Verdict], actual: &[LabelClass]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "flow_id,mse,cluster,distance,tanh,final_label,actual_label")?;
        for (v, label) in verdicts.iter().zip(actual) {
            let cluster = match v.cluster() {
                Some(c) => format!("{},{},{}", c.cluster, c.distance, c.tanh_score),
                None => ",,".into(),
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                v.flow_index(),
                v.mse(),
                cluster,
                v.final_label().as_str(),
                label.as_str()
            )?;
        }
        Ok(())
    })
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let mode = parse_mode(a.tau.as_deref(), model.threshold_mode())?;
    let flows = read_flows(&a.input)?;
    let verdicts = model.detect_with(&flows, mode)?;
    let actual: Vec<LabelClass> = flows.iter().map(|f| f.actual_label).collect();
    write_verdicts(&a.out, &verdicts, &actual)
}

#[derive(Serialize)]
struct ConfusionMetrics {
    outcome: ScenarioOutcome,
    fpr: Option<f64>,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
}

#[derive(Serialize)]
struct ConfusionReport {
    scenarios: Vec<ConfusionMetrics>,
    #[serde(rename = "macro")]
    macro_avg: MacroOnly,
}

#[derive(Serialize)]
struct MacroOnly {
    fpr: Option<f64>,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
}

fn confusion_report(tokens: &[String]) -> Result<ConfusionReport> {
    let attacks = LabelClass::ATTACKS;
    let mut scenarios = Vec::new();
    for (i, group) in tokens.chunks(4).enumerate() {
        let (tp, fn_, fp, tn) = parse_confusion(group)?;
        let scenario = attacks.get(i).copied().unwrap_or(attacks[attacks.len() - 1]);
        let outcome = ScenarioOutcome { scenario, tp, fp, tn, fn_ };
        let m = scenario_metrics(&outcome);
        scenarios.push(ConfusionMetrics { outcome, fpr: m.fpr, precision: m.precision, recall: m.recall, f1: m.f1 });
    }
    let avg = |f: fn(&ConfusionMetrics) -> Option<f64>| macro_average(&scenarios.iter().map(f).collect::<Vec<_>>());
    let macro_avg = MacroOnly {
        fpr: avg(|s| s.fpr),
        precision: avg(|s| s.precision),
        recall: avg(|s| s.recall),
        f1: avg(|s| s.f1),
    };
    Ok(ConfusionReport { scenarios, macro_avg })
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if !a.from_confusion.is_empty() {
        return emit_json(a.out.as_deref(), &confusion_report(&a.from_confusion)?);
    }
    let (Some(model_path), Some(data)) = (a.model.as_ref(), a.data.as_ref()) else {
        return Err(Error::Config("eval needs --model and --data, or --from-confusion".into()));
    };
    let model = read_model(model_path)?;
    let test = read_partition(data, TEST_FILE)?;
    let ev = evaluate(&model, &test)?;
    emit_json(a.out.as_deref(), &ev.report)?;
    if let Some(path) = &a.pr_curve {
        write_atomic(path, |w| {
            writeln!(w, "scenario,threshold,precision,recall")?;
            for (scenario, curve) in &ev.pr_curves {
                for p in curve {
                    writeln!(w, "{},{},{},{}", scenario.slug(), p.threshold, p.precision, p.recall)?;
                }
            }
            Ok(())
        })?;
    }
    if let Some(path) = &a.verdicts {
        let actual: Vec<LabelClass> = test.iter().map(|f| f.actual_label).collect();
        write_verdicts(path, &ev.verdicts, &actual)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let opts = BenchOptions {
        lof_neighbors: a.lof_neighbors,
        lof_train_cap: a.lof_train_cap,
        if_trees: a.if_trees,
        if_subsample: a.if_subsample,
    };
    let training = read_partition(&a.data, TRAINING_FILE)?;
    let validation = read_partition(&a.data, VALIDATION_FILE)?;
    let test = read_partition(&a.data, TEST_FILE)?;
    let report = run_bench(&training, &validation, &test, &config, &opts)?;
    write_json(&a.out, &report)
}

fn cmd_grid(a: GridArgs) -> Result<()> {
    let base = a.config.resolve()?;
    let axes = if a.single { GridAxes::single(&base) } else { GridAxes::default() };
    let training = read_partition(&a.data, TRAINING_FILE)?;
    let validation = read_partition(&a.data, VALIDATION_FILE)?;
    let test = read_partition(&a.data, TEST_FILE)?;
    let entries = run_grid(&training, &validation, &test, &base, &axes);
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} combinations failed", entries.len());
    }
    write_json(&a.out, &entries)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let mut pool = read_partition(&a.data, TRAINING_FILE)?;
    pool.extend(read_partition(&a.data, VALIDATION_FILE)?);
    pool.sort_by_key(|f| f.flow_start_ms);
    let test = read_partition(&a.data, TEST_FILE)?;
    let rows = sensitivity_sweep(&pool, &test, &a.sizes, &config);
    write_atomic(&a.out, |w| {
        writeln!(w, "size,training_rows,validation_rows,precision,recall,f1,auprc,error")?;
        for r in &rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.size,
                r.training_rows,
                r.validation_rows,
                opt(r.precision),
                opt(r.recall),
                opt(r.f1),
                opt(r.auprc),
                err
            )?;
        }
        Ok(())
    })
}

/// Splits `days` in proportion to 13:3:5, at least one day each.
fn proportional_split(days: u32) -> Result<SplitDays> {
    if days < 3 {
        return Err(Error::Config(format!("need at least 3 days, got {days}")));
    }
    let d = days as f64;
    let test = ((5.0 * d / 21.0).round() as u64).max(1);
    let validation = ((3.0 * d / 21.0).round() as u64).max(1);
    let training = (days as u64).saturating_sub(test + validation);
    if training == 0 {
        return Err(Error::Config(format!("{days} days leave no training day")));
    }
    Ok(SplitDays::new(training, validation, test))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let split = match &a.split {
        Some(s) => s.parse()?,
        None => proportional_split(a.days)?,
    };
    if split.total() != a.days as u64 {
        return Err(Error::Config(format!("split {} days does not match --days {}", split.total(), a.days)));
    }
    let cfg = SynthConfig::with_days(a.days, split, a.seed).with_homes(a.homes)?;
    let flows = generate(&cfg)?;
    write_flows(&a.out, &flows)?;
    let lab = cfg.lab();
    eprintln!(
        "wrote {} flows; lab network {} device {}; split {},{},{}",
        flows.len(),
        lab.network_id,
        lab.device_id,
        split.training,
        split.validation,
        split.test
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_split_matches_reference() {
        assert_eq!(proportional_split(21).unwrap(), SplitDays::new(13, 3, 5));
        assert_eq!(proportional_split(7).unwrap(), SplitDays::new(4, 1, 2));
        assert!(proportional_split(2).is_err());
    }

    #[test]
    fn confusion_tokens() {
        let t: Vec<String> = ["tp=3", "fn=1", "fp=2", "tn=4"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_confusion(&t).unwrap(), (3, 1, 2, 4));
        assert!(parse_confusion(&t[..3]).is_err());
    }

    #[test]
    fn tau_parsing() {
        assert_eq!(parse_mode(None, ThresholdMode::PerCluster).unwrap(), ThresholdMode::PerCluster);
        assert_eq!(parse_mode(Some("0.5"), ThresholdMode::PerCluster).unwrap(), ThresholdMode::GlobalTanh(0.5));
        assert!(parse_mode(Some("1.5"), ThresholdMode::PerCluster).is_err());
    }
}
