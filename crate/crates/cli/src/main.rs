//! Command-line front end: evaluate prediction files, export curves, run
//! the metric audits, train on synthetic data, and sweep thresholds.
//!
//! Exit codes: 0 success, 1 usage or parse failure, 2 audit precondition
//! not met, 3 internal consistency failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;

use osr_cli::{document, io, CliError};

use osr_core::audit::{
    construct_prop1, construct_prop2_with_ratio, construct_prop3, verify_prop5, AuditMetric,
    AuditReport, DecisionRow, DecisionTable, Verdict,
};
use osr_core::classification::exact_metrics;
use osr_core::confusion::ExtendedConfusionMatrix;
use osr_core::exact;
use osr_core::ranking::{
    aggregate_baselines, auc_pair_stats, bound_operating_point, close_set_accuracy,
    decision_sweep_thresholds, error_at_tpr_exact, ofpr_cotpr_curve, openauc, openauc_pair_stats,
    oscr_curve, rejection_counts_at, roc_curve, Curve, OpenAucRoute, PairStats, TieMode,
};
use osr_core::synth::{generate_synth, SynthConfig};
use osr_core::trainer::{ablate_gate, score_table_from_model, train, TrainConfig, TrainState};
use osr_core::{decide, ScoreTable};

use document::{Document, Section};
use io::InputTable;

#[derive(Parser)]
#[command(
    name = "osr",
    version,
    about = "Open-set recognition metrics, audits, and training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TieArg {
    Strict,
    Half,
}

impl From<TieArg> for TieMode {
    fn from(arg: TieArg) -> TieMode {
        match arg {
            TieArg::Strict => TieMode::Strict,
            TieArg::Half => TieMode::Half,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveArg {
    Roc,
    Oscr,
    OfprCotpr,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstructionArg {
    Prop1,
    Prop2,
    Prop3,
    Prop5,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    FMacro,
    FMicro,
    Youden,
}

impl From<MetricArg> for AuditMetric {
    fn from(arg: MetricArg) -> AuditMetric {
        match arg {
            MetricArg::FMacro => AuditMetric::FscoreMacro,
            MetricArg::FMicro => AuditMetric::FscoreMicro,
            MetricArg::Youden => AuditMetric::Youden,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepMetric {
    FMacro,
    FMicro,
    Youden,
    Nacc,
}

impl SweepMetric {
    fn column(self) -> &'static str {
        match self {
            SweepMetric::FMacro => "f_macro",
            SweepMetric::FMicro => "f_micro",
            SweepMetric::Youden => "youden",
            SweepMetric::Nacc => "nacc",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute all metrics for a prediction file.
    Evaluate(EvaluateArgs),
    /// Export a ROC, OSCR, or OFPR-COTPR curve as CSV on stdout.
    Curve(CurveArgs),
    /// Run an adversarial metric audit and write the transformed table.
    Audit(AuditArgs),
    /// Train a small model on synthetic blobs and evaluate it.
    Train(TrainArgs),
    /// Emit per-threshold classification metrics as CSV on stdout.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction file to evaluate.
    #[arg(long)]
    input: PathBuf,
    /// Rejection threshold for classification metrics; repeatable.
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
    /// Balance constant for normalized accuracy, in (0,1).
    #[arg(long = "lambda-na", default_value = "0.5")]
    lambda_na: String,
    /// Target open-set recall for the rejection-error metric.
    #[arg(long = "error-tpr", default_value = "0.95")]
    error_tpr: String,
    /// Tie handling for ranking metrics.
    #[arg(long, value_enum, default_value = "strict")]
    ties: TieArg,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: CurveArg,
}

#[derive(Args)]
struct AuditArgs {
    /// Prediction file (prop3/prop5, or prop1/prop2 with --threshold) or
    /// decision file (prop1/prop2).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    construction: ConstructionArg,
    /// Rejection threshold; required for prop5 and for prediction-file
    /// inputs to prop1/prop2.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "lambda-na", default_value = "0.5")]
    lambda_na: String,
    /// Metric certified by the prop1 exchange.
    #[arg(long, value_enum, default_value = "f-macro")]
    metric: MetricArg,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Weight of the ranking term.
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Beta parameter of the mixing distribution.
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long = "batch-size", default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 24)]
    hidden: usize,
    #[arg(long = "synth-known", default_value_t = 4)]
    synth_known: usize,
    #[arg(long = "synth-open", default_value_t = 2)]
    synth_open: usize,
    #[arg(long = "synth-samples", default_value_t = 200)]
    synth_samples: usize,
    #[arg(long = "synth-dim", default_value_t = 2)]
    synth_dim: usize,
    #[arg(long = "synth-spread", default_value_t = 4.0)]
    synth_spread: f64,
    #[arg(long = "synth-sigma", default_value_t = 0.9)]
    synth_sigma: f64,
    /// Directory for the loss history and prediction files.
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    /// Also train the gate-free variant and report both.
    #[arg(long = "ablate-gate")]
    ablate_gate: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    /// Metrics to include as CSV columns.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = [SweepMetric::FMacro, SweepMetric::FMicro, SweepMetric::Youden, SweepMetric::Nacc]
    )]
    metrics: Vec<SweepMetric>,
    #[arg(long = "lambda-na", default_value = "0.5")]
    lambda_na: String,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_usage_error = err.use_stderr();
            let _ = err.print();
            std::process::exit(if is_usage_error { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Curve(args) => cmd_curve(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            std::process::exit(err.code);
        }
    }
}

fn load_score_table(path: &Path) -> Result<ScoreTable, CliError> {
    match io::read_input(path)? {
        InputTable::Scores(table) => Ok(table.normalize()?),
        InputTable::Decisions(_) => Err(CliError::parse(format!(
            "{}: this command needs a prediction file with scores",
            path.display()
        ))),
    }
}

fn parse_lambda(text: &str) -> Result<(BigRational, f64), CliError> {
    let ratio = exact::parse_decimal(text)?;
    let display = exact::to_f64(&ratio);
    Ok((ratio, display))
}

/// Ranking metrics plus the three-route cross-check. Population errors are
/// reported inside the section rather than aborting.
fn ranking_section(
    table: &ScoreTable,
    ties: TieMode,
    error_target: &BigRational,
    error_target_text: &str,
) -> Result<Section, CliError> {
    let mut section = Section::new("ranking");
    match close_set_accuracy(table) {
        Ok(acc) => {
            let correct = table
                .samples()
                .iter()
                .filter(|s| match s.true_label {
                    osr_core::Label::Known(c) => s.argmin_class() == c,
                    osr_core::Label::Open => false,
                })
                .count() as u64;
            let frac = exact::ratio(correct, table.num_close() as u64);
            section.fraction("acc_known", acc, exact::format_fraction(&frac));
        }
        Err(e) => {
            section.unavailable("acc_known", e.to_string());
        }
    }

    match auc_pair_stats(table) {
        Ok(stats) => {
            let gated = openauc_pair_stats(table)?;
            section.fraction("auc", stats.value(ties), pair_fraction(&stats, ties));
            let pairwise = openauc(table, OpenAucRoute::Pairwise, ties)?;
            section.fraction("openauc", pairwise, pair_fraction(&gated, ties));

            // Internal consistency: the three strict routes must agree to
            // the last bit.
            let strict_pairwise = openauc(table, OpenAucRoute::Pairwise, TieMode::Strict)?;
            let sweep = openauc(table, OpenAucRoute::Sweep, TieMode::Strict)?;
            let masked = openauc(table, OpenAucRoute::Masked, TieMode::Strict)?;
            if strict_pairwise != sweep || strict_pairwise != masked {
                return Err(CliError::consistency(format!(
                    "openauc routes disagree: pairwise {strict_pairwise}, sweep {sweep}, \
                     masked {masked}"
                )));
            }
            section.value("openauc_sweep", sweep);
            section.value("openauc_masked", masked);

            let agg = aggregate_baselines(table, ties)?;
            section.value("agg_product", agg.product);
            section.value("agg_sum", agg.sum);
            section.value("agg_pointwise", agg.pointwise_sum);

            let err = error_at_tpr_exact(table, error_target)?;
            section.value(&format!("error_at_{error_target_text}_tpr"), err);
        }
        Err(e) => {
            for key in [
                "auc",
                "openauc",
                "openauc_sweep",
                "openauc_masked",
                "agg_product",
                "agg_sum",
                "agg_pointwise",
                "error_at_tpr",
            ] {
                section.unavailable(key, e.to_string());
            }
        }
    }
    Ok(section)
}

fn pair_fraction(stats: &PairStats, ties: TieMode) -> String {
    let frac = match ties {
        TieMode::Strict => exact::ratio(stats.concordant_pairs, stats.total_pairs()),
        TieMode::Half => exact::ratio(
            2 * stats.concordant_pairs + stats.tied_pairs,
            2 * stats.total_pairs(),
        ),
    };
    exact::format_fraction(&frac)
}

fn classification_section(
    name: &str,
    matrix: &ExtendedConfusionMatrix,
    lambda: &BigRational,
) -> Result<Section, CliError> {
    let metrics = exact_metrics(matrix, lambda)?;
    let mut section = Section::new(name);
    for (key, value) in [
        ("f_macro", &metrics.f_macro),
        ("f_micro", &metrics.f_micro),
        ("youden", &metrics.youden),
        ("aks", &metrics.aks),
        ("aus", &metrics.aus),
        ("nacc", &metrics.nacc),
    ] {
        section.fraction(key, exact::to_f64(value), exact::format_fraction(value));
    }
    section.warnings = matrix
        .degenerate_classes()
        .into_iter()
        .map(|(class, reason)| {
            let name = if class == matrix.open_index() {
                "open".to_string()
            } else {
                class.to_string()
            };
            format!("degenerate class {name}: {reason}")
        })
        .collect();
    Ok(section)
}

fn summary_section(table: &ScoreTable, ties: TieMode) -> Section {
    let mut section = Section::new("input");
    section.text("samples", table.len().to_string());
    section.text("close_samples", table.num_close().to_string());
    section.text("open_samples", table.num_open().to_string());
    section.text("known_classes", table.num_known_classes().to_string());
    section.text(
        "tie_mode",
        match ties {
            TieMode::Strict => "strict",
            TieMode::Half => "half",
        },
    );
    section
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    let table = load_score_table(&args.input)?;
    let (lambda, _) = parse_lambda(&args.lambda_na)?;
    let (error_target, _) = parse_lambda(&args.error_tpr)?;
    let ties: TieMode = args.ties.into();

    let mut doc = Document::new("open-set evaluation report");
    doc.push(summary_section(&table, ties));
    doc.push(ranking_section(&table, ties, &error_target, &args.error_tpr)?);
    for &threshold in &args.thresholds {
        let matrix = ExtendedConfusionMatrix::from_table(&table, threshold)?;
        doc.push(classification_section(
            &format!("threshold {threshold}"),
            &matrix,
            &lambda,
        )?);
    }
    print!("{}", if args.json { doc.to_json() } else { doc.to_text() });
    if args.json {
        println!();
    }
    Ok(0)
}

fn print_curve(curve: &Curve) {
    println!("x,y,threshold");
    for p in &curve.points {
        println!("{},{},{}", p.x, p.y, p.threshold);
    }
}

fn cmd_curve(args: &CurveArgs) -> Result<i32, CliError> {
    let table = load_score_table(&args.input)?;
    let curve = match args.kind {
        CurveArg::Roc => roc_curve(&table)?,
        CurveArg::Oscr => oscr_curve(&table)?,
        CurveArg::OfprCotpr => ofpr_cotpr_curve(&table)?,
    };
    print_curve(&curve);
    Ok(0)
}

fn decisions_from_scores(table: &ScoreTable, threshold: f64) -> Result<DecisionTable, CliError> {
    let rows = table
        .samples()
        .iter()
        .map(|s| DecisionRow {
            id: s.id.clone(),
            true_label: s.true_label,
            predicted: decide(s, threshold).predicted,
        })
        .collect();
    Ok(DecisionTable::new(table.num_known_classes(), rows)?)
}

fn audit_document(report: &AuditReport, adversarial: &Path) -> Document {
    let mut doc = Document::new("audit report");
    let mut section = Section::new("result");
    section.text(
        "construction",
        format!("{:?}", report.construction).to_lowercase(),
    );
    section.text(
        "verdict",
        match report.verdict {
            Verdict::ConfirmedInconsistent => "confirmed-inconsistent",
            Verdict::ConditionNotMet => "condition-not-met",
        },
    );
    section.text("precondition_held", report.precondition_held.to_string());
    section.text("steps_applied", report.steps_applied.to_string());
    if let (Some(before), Some(after)) = (report.tp_open_before, report.tp_open_after) {
        section.text("tp_open", format!("{before} -> {after}"));
    }
    for note in &report.notes {
        section.warnings.push(note.clone());
    }
    section.text("adversarial_file", adversarial.display().to_string());
    doc.push(section);

    for (name, metrics) in [
        ("metrics before", &report.metric_before),
        ("metrics after", &report.metric_after),
    ] {
        let mut section = Section::new(name);
        for (key, value) in &metrics.values {
            match metrics.fractions.get(key) {
                Some(frac) => section.fraction(key, *value, frac.clone()),
                None => section.value(key, *value),
            };
        }
        doc.push(section);
    }
    doc
}

fn cmd_audit(args: &AuditArgs) -> Result<i32, CliError> {
    let (lambda, lambda_display) = parse_lambda(&args.lambda_na)?;
    let input = io::read_input(&args.input)?;
    let adv_path = io::adversarial_path(&args.input);

    let (report, adversarial_text) = match args.construction {
        ConstructionArg::Prop1 | ConstructionArg::Prop2 => {
            let decisions = match input {
                InputTable::Decisions(d) => d,
                InputTable::Scores(table) => {
                    let threshold = args.threshold.ok_or_else(|| {
                        CliError::parse(
                            "--threshold is required to derive decisions from a prediction file",
                        )
                    })?;
                    decisions_from_scores(&table.normalize()?, threshold)?
                }
            };
            let (report, transformed) = match args.construction {
                ConstructionArg::Prop1 => construct_prop1(&decisions, args.metric.into())?,
                _ => construct_prop2_with_ratio(&decisions, &lambda, lambda_display)?,
            };
            (report, io::render_decision_file(&transformed))
        }
        ConstructionArg::Prop3 => {
            let table = match input {
                InputTable::Scores(t) => t.normalize()?,
                InputTable::Decisions(_) => {
                    return Err(CliError::parse("prop3 needs a prediction file with scores"))
                }
            };
            let (report, transformed) = construct_prop3(&table)?;
            (report, io::render_prediction_file(&transformed))
        }
        ConstructionArg::Prop5 => {
            let table = match input {
                InputTable::Scores(t) => t.normalize()?,
                InputTable::Decisions(_) => {
                    return Err(CliError::parse("prop5 needs a prediction file with scores"))
                }
            };
            let threshold = args
                .threshold
                .ok_or_else(|| CliError::parse("prop5 requires --threshold"))?;
            let (report, transformed) = verify_prop5(&table, threshold)?;
            (report, io::render_prediction_file(&transformed))
        }
    };

    io::write_text(&adv_path, &adversarial_text)?;
    if args.json {
        #[derive(serde::Serialize)]
        struct JsonReport<'a> {
            report: &'a AuditReport,
            adversarial_file: String,
        }
        let wrapper = JsonReport {
            report: &report,
            adversarial_file: adv_path.display().to_string(),
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&wrapper).expect("report serializes")
        );
    } else {
        print!("{}", audit_document(&report, &adv_path).to_text());
    }
    Ok(match report.verdict {
        Verdict::ConfirmedInconsistent => 0,
        Verdict::ConditionNotMet => 2,
    })
}

fn loss_history_csv(state: &TrainState) -> String {
    let mut out = String::from("epoch,total_loss,close_loss,ranking_loss\n");
    for record in &state.loss_history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            record.epoch, record.total, record.close, record.ranking
        ));
    }
    out
}

fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let synth = SynthConfig {
        num_known_classes: args.synth_known,
        num_open_classes: args.synth_open,
        samples_per_class: args.synth_samples,
        input_dim: args.synth_dim,
        class_center_spread: args.synth_spread,
        noise_sigma: args.synth_sigma,
        seed: args.seed,
    };
    let config = TrainConfig {
        lambda: args.lambda,
        alpha: args.alpha,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        hidden_dim: args.hidden,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let data = generate_synth(&synth)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::parse(format!("{}: {e}", args.out_dir.display())))?;

    let mut doc = Document::new("synthetic training report");
    let mut config_section = Section::new("config");
    config_section.text("lambda", args.lambda.to_string());
    config_section.text("alpha", args.alpha.to_string());
    config_section.text("seed", args.seed.to_string());
    config_section.text("epochs", args.epochs.to_string());
    config_section.text(
        "synth",
        format!(
            "{} known + {} open classes, {} samples/class, dim {}",
            args.synth_known, args.synth_open, args.synth_samples, args.synth_dim
        ),
    );
    doc.push(config_section);

    let (state, test_table) = if args.ablate_gate {
        let ablation = ablate_gate(&data, &config)?;
        let gated_table = score_table_from_model(&ablation.gated_state.model, &data.test)?;
        let ungated_table = score_table_from_model(&ablation.ungated_state.model, &data.test)?;
        io::write_text(
            &args.out_dir.join("loss_history_ungated.csv"),
            &loss_history_csv(&ablation.ungated_state),
        )?;
        io::write_text(
            &args.out_dir.join("predictions_ungated.csv"),
            &io::render_prediction_file(&ungated_table),
        )?;
        let mut section = Section::new("gate ablation");
        section.value("openauc_gated", ablation.gated_openauc);
        section.value("openauc_ungated", ablation.ungated_openauc);
        doc.push(section);
        (ablation.gated_state, gated_table)
    } else {
        let state = train(&data.train, &config)?;
        let table = score_table_from_model(&state.model, &data.test)?;
        (state, table)
    };

    io::write_text(&args.out_dir.join("loss_history.csv"), &loss_history_csv(&state))?;
    io::write_text(
        &args.out_dir.join("predictions.csv"),
        &io::render_prediction_file(&test_table),
    )?;

    let mut train_section = Section::new("training");
    if let Some(last) = state.loss_history.last() {
        train_section.value("final_total_loss", last.total);
        train_section.value("final_close_loss", last.close);
        train_section.value("final_ranking_loss", last.ranking);
    }
    train_section.text(
        "skipped_mixup_batches",
        state.skipped_mixup_batches.to_string(),
    );
    doc.push(train_section);

    let target = exact::parse_decimal("0.95").expect("constant parses");
    doc.push(ranking_section(&test_table, TieMode::Strict, &target, "0.95")?);
    if let Some((threshold, fpr, tpr)) = bound_operating_point(&test_table)? {
        let mut section = Section::new("recall bound");
        section.value("threshold", threshold);
        section.value("fpr_open", fpr);
        section.value("tpr_open", tpr);
        doc.push(section);
    }

    print!("{}", if args.json { doc.to_json() } else { doc.to_text() });
    if args.json {
        println!();
    }
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let table = load_score_table(&args.input)?;
    let (lambda, _) = parse_lambda(&args.lambda_na)?;
    let n_open = table.num_open() as f64;
    let n_close = table.num_close() as f64;

    let mut header = String::from("threshold,tpr_open,fpr_open");
    for metric in &args.metrics {
        header.push(',');
        header.push_str(metric.column());
    }
    println!("{header}");

    for threshold in decision_sweep_thresholds(&table) {
        let matrix = ExtendedConfusionMatrix::from_table(&table, threshold)?;
        let metrics = exact_metrics(&matrix, &lambda)?;
        let (rej_open, rej_close) = rejection_counts_at(&table, threshold);
        let tpr_open = if n_open > 0.0 { rej_open as f64 / n_open } else { 0.0 };
        let fpr_open = if n_close > 0.0 { rej_close as f64 / n_close } else { 0.0 };
        let mut row = format!("{threshold},{tpr_open},{fpr_open}");
        for metric in &args.metrics {
            let value = match metric {
                SweepMetric::FMacro => &metrics.f_macro,
                SweepMetric::FMicro => &metrics.f_micro,
                SweepMetric::Youden => &metrics.youden,
                SweepMetric::Nacc => &metrics.nacc,
            };
            row.push(',');
            row.push_str(&exact::to_f64(value).to_string());
        }
        println!("{row}");
    }
    Ok(0)
}
