//! Command-line surface.
//!
//! Subcommands: `basis`, `fit`, `gof`, `entropy`, `scan`, `dss`, `simulate`,
//! and `pipeline` (the end-to-end flow: basis → coefficients → selection →
//! Fourier and maxent fits → goodness-of-fit → relative entropy → report).
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::base::{make_parametric, BaseMeasure, EmpiricalCounts, Family};
use crate::basis::{build_basis, LpBasis};
use crate::discovery::{bump_scan, dss_embed, lp_transform_matrix, BumpScanSettings};
use crate::error::{Error, Result};
use crate::inference::{
    bootstrap_se, double_bootstrap_test, lp_gof_with_basis, parametric_bootstrap_test,
    pearson_chisq, relative_entropy, GofReport,
};
use crate::io::{
    counts_csv, csv_table, format_sig, load_model_spec, parse_counts, report_json, write_text,
    Meta, ModelSpec,
};
use crate::sharpen::{lp_coefficients, select, ModelForm, Selection, SharpenedModel};
use crate::simulate::{
    card_study, generate_hep, make_alternative, power_curve, two_cell_null, Alternative, Method,
    PowerStudySpec,
};

/// Run with explicit arguments; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "lp-sharpen",
    version,
    about = "Density sharpening for discrete distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Threshold,
    Aic,
    All,
}

impl From<SelectArg> for Selection {
    fn from(s: SelectArg) -> Selection {
        match s {
            SelectArg::Threshold => Selection::Threshold,
            SelectArg::Aic => Selection::Aic,
            SelectArg::All => Selection::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Fourier,
    Maxent,
}

#[derive(Clone, Copy, ValueEnum)]
enum GofMethod {
    Lpgof,
    Pearson,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct ModelArgs {
    /// Model spec JSON ({family, params, truncation})
    #[arg(long)]
    model: PathBuf,
    /// Restrict the null to the observed range of the data before fitting
    #[arg(long, default_value_t = false)]
    restrict_range: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the LP-orthonormal basis table of a null model
    Basis {
        #[arg(long)]
        model: PathBuf,
        /// Highest basis order
        #[arg(long, default_value_t = 10)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a sharpened model to data
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "maxent")]
        form: FormArg,
        #[arg(long, value_enum, default_value = "threshold")]
        select: SelectArg,
        #[arg(long, default_value_t = 10)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also emit the comparison-density curve (u, d(u)) as CSV
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Goodness-of-fit tests
    Gof {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "lpgof")]
        method: GofMethod,
        #[arg(long, value_enum, default_value = "threshold")]
        select: SelectArg,
        #[arg(long, default_value_t = 10)]
        order: usize,
        /// Add a parametric-bootstrap p-value with this many replicates
        #[arg(long)]
        boot: Option<usize>,
        /// Refit the null parameters inside each bootstrap replicate
        #[arg(long, default_value_t = false)]
        double_boot: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative entropy of the sharpened model, with bootstrap SE and test
    Entropy {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "threshold")]
        select: SelectArg,
        #[arg(long, default_value_t = 10)]
        order: usize,
        /// Bootstrap replicates for the standard error and the test
        #[arg(long, default_value_t = 1000)]
        boot: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pointwise bootstrap bump scan over the comparison density
    Scan {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Null bootstrap replicates
        #[arg(long, default_value_t = 10_000)]
        b: usize,
        /// Detection level in one-sided normal sigmas
        #[arg(long, default_value_t = 5.0)]
        sigma: f64,
        #[arg(long, default_value_t = 10)]
        order: usize,
        /// Physical scan window `lo,hi` (default: full support)
        #[arg(long)]
        window: Option<String>,
        /// Refuse levels below bootstrap resolution instead of approximating
        #[arg(long, default_value_t = false)]
        exact_tail: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discovery-source separation of many counts files
    Dss {
        /// Directory of counts files (each file is one source)
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Number of LP coefficients per source
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulation harness
    Simulate {
        #[command(subcommand)]
        kind: SimulateKind,
    },
    /// End-to-end analysis: basis, coefficients, selection, both fits,
    /// goodness-of-fit, relative entropy
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        /// Model spec JSON; alternatively use --family
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fit this family to the data (poisson, binomial, neg_binomial)
        #[arg(long)]
        family: Option<String>,
        /// Trial count for --family binomial
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long, value_enum, default_value = "threshold")]
        select: SelectArg,
        #[arg(long, default_value_t = 10)]
        order: usize,
        #[arg(long, default_value_t = false)]
        restrict_range: bool,
        /// Parametric-bootstrap replicates for the KL test (0 = skip)
        #[arg(long, default_value_t = 0)]
        boot: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimulateKind {
    /// Fixed points of shuffled decks; config: {ks, n_decks, replications, deck_size}
    Card {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectrum counts; config: {k, n, window, bump: {mass, width, fraction}?}
    Hep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power table; config mirrors the power study spec
    Power {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("LP_SHARPEN_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

/// Null measure for a data set: built from the model spec, re-truncated to
/// cover the data, optionally restricted to the observed range. A fixed
/// support that cannot cover the data is returned as-is; downstream
/// consumers either report the zero-probability cells (Pearson) or fail
/// with a support error (LP paths).
fn prepare_measure(
    spec: &ModelSpec,
    data: &EmpiricalCounts,
    restrict_range: bool,
) -> Result<BaseMeasure> {
    let built = spec.build()?;
    let bm = built.covering_data(data).unwrap_or(built);
    if restrict_range {
        bm.restricted_to_observed_range(data)
    } else {
        Ok(bm)
    }
}

fn basis_for(bm: &BaseMeasure, order: usize) -> Result<LpBasis> {
    build_basis(bm, order.min(bm.len() - 1).max(1))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Basis { model, order, out } => cmd_basis(&model, order, &out),
        Command::Fit {
            data,
            model,
            form,
            select,
            order,
            out,
            curve,
            seed,
        } => cmd_fit(
            &data,
            &model,
            form,
            select.into(),
            order,
            &out,
            curve.as_deref(),
            seed,
        ),
        Command::Gof {
            data,
            model,
            method,
            select,
            order,
            boot,
            double_boot,
            format,
            seed,
            out,
        } => cmd_gof(
            &data,
            &model,
            method,
            select.into(),
            order,
            boot,
            double_boot,
            format,
            seed,
            &out,
        ),
        Command::Entropy {
            data,
            model,
            select,
            order,
            boot,
            seed,
            out,
        } => cmd_entropy(&data, &model, select.into(), order, boot, seed, &out),
        Command::Scan {
            data,
            model,
            b,
            sigma,
            order,
            window,
            exact_tail,
            seed,
            out,
        } => cmd_scan(
            &data, &model, b, sigma, order, window, exact_tail, seed, &out,
        ),
        Command::Dss {
            sources,
            model,
            m,
            out,
        } => cmd_dss(&sources, &model, m, &out),
        Command::Simulate { kind } => match kind {
            SimulateKind::Card { config, seed, out } => cmd_simulate_card(&config, seed, &out),
            SimulateKind::Hep { config, seed, out } => cmd_simulate_hep(&config, seed, &out),
            SimulateKind::Power { config, seed, out } => cmd_simulate_power(&config, seed, &out),
        },
        Command::Pipeline {
            data,
            model,
            family,
            trials,
            select,
            order,
            restrict_range,
            boot,
            seed,
            out,
        } => cmd_pipeline(
            &data,
            model.as_deref(),
            family.as_deref(),
            trials,
            select.into(),
            order,
            restrict_range,
            boot,
            seed,
            out.as_deref(),
        ),
    }
}

fn meta_for(seed: u64, config: Value) -> Meta {
    Meta::new(seed, config)
}

fn cmd_basis(model: &Path, order: usize, out: &Path) -> Result<()> {
    let spec = load_model_spec(model)?;
    let bm = spec.build()?;
    let basis = basis_for(&bm, order)?;
    let mut header: Vec<String> = vec!["x".into(), "p0".into(), "cdf".into()];
    for &j in basis.orders() {
        header.push(format!("T{j}"));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = (0..bm.len())
        .map(|i| {
            let mut row = vec![
                format_sig(bm.support()[i]),
                format_sig(bm.pmf()[i]),
                format_sig(bm.cdf()[i]),
            ];
            for &j in basis.orders() {
                row.push(format_sig(basis.value(j, i).expect("retained")));
            }
            row
        })
        .collect();
    let config = json!({"command": "basis", "model": model.display().to_string(), "order": order});
    let meta = meta_for(0, config);
    let mut text = format!(
        "# lp-sharpen {} config_hash={} dropped_orders={:?}\n",
        crate::VERSION,
        meta.config_hash,
        basis.dropped()
    );
    text.push_str(&csv_table(&header_refs, &rows));
    write_text(out, &text)?;
    println!(
        "basis: {} orders retained over {} support points -> {}",
        basis.num_retained(),
        bm.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    form: ModelForm,
    selection: Selection,
    n: u64,
    active: Vec<usize>,
    coefficients: Vec<f64>,
    psi: f64,
    negative: bool,
    all_coefficients: Vec<Value>,
    base: Value,
}

fn fit_model(
    basis: &LpBasis,
    data: &EmpiricalCounts,
    form: FormArg,
    selection: Selection,
) -> Result<(SharpenedModel, Vec<Value>)> {
    let coefs = lp_coefficients(basis, data)?;
    let active = select(&coefs, selection);
    let table: Vec<Value> = coefs
        .z_scores()
        .iter()
        .zip(&coefs.estimates)
        .map(|(&(order, z), &(_, lp))| json!({"order": order, "lp": lp, "z": z}))
        .collect();
    let model = match form {
        FormArg::Fourier => SharpenedModel::ds_fourier(basis, &coefs, &active)?,
        FormArg::Maxent => SharpenedModel::maxent_fit(basis, &coefs.estimates, &active)?,
    };
    Ok((model, table))
}

fn curve_csv(model: &SharpenedModel) -> String {
    let bm = model.base();
    let mut rows = vec![vec!["0".to_string(), format_sig(model.density_at_index(0))]];
    for i in 0..bm.len() {
        rows.push(vec![
            format_sig(bm.cdf()[i]),
            format_sig(model.density_at_index(i)),
        ]);
    }
    csv_table(&["u", "d"], &rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    data_path: &Path,
    model: &ModelArgs,
    form: FormArg,
    selection: Selection,
    order: usize,
    out: &Path,
    curve: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let data = parse_counts(data_path)?;
    let spec = load_model_spec(&model.model)?;
    let bm = prepare_measure(&spec, &data, model.restrict_range)?;
    let basis = basis_for(&bm, order)?;
    let (fitted, table) = fit_model(&basis, &data, form, selection)?;
    let report = FitReport {
        form: fitted.form(),
        selection,
        n: data.n(),
        active: fitted.active().to_vec(),
        coefficients: fitted.coefficients().to_vec(),
        psi: fitted.psi(),
        negative: fitted.is_negative(),
        all_coefficients: table,
        base: serde_json::to_value(&spec)?,
    };
    let seed = resolve_seed(seed);
    let config = json!({
        "command": "fit",
        "data": data_path.display().to_string(),
        "model": model.model.display().to_string(),
        "restrict_range": model.restrict_range,
        "form": match form { FormArg::Fourier => "fourier", FormArg::Maxent => "maxent" },
        "select": selection,
        "order": order,
    });
    write_text(out, &report_json(&report, &meta_for(seed, config))?)?;
    if let Some(curve_path) = curve {
        write_text(curve_path, &curve_csv(&fitted))?;
    }
    println!(
        "fit: active set {:?}{} -> {}",
        fitted.active(),
        if fitted.is_negative() {
            " (negative mass flagged)"
        } else {
            ""
        },
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gof(
    data_path: &Path,
    model: &ModelArgs,
    method: GofMethod,
    selection: Selection,
    order: usize,
    boot: Option<usize>,
    double_boot: bool,
    format: ReportFormat,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let data = parse_counts(data_path)?;
    let spec = load_model_spec(&model.model)?;
    let bm = prepare_measure(&spec, &data, model.restrict_range)?;
    let seed = resolve_seed(seed);

    let mut report: GofReport = match method {
        GofMethod::Pearson => pearson_chisq(&data, &bm)?,
        GofMethod::Lpgof => {
            let basis = basis_for(&bm, order)?;
            lp_gof_with_basis(&basis, &data, selection)?
        }
    };

    if let Some(b) = boot {
        let restrict = model.restrict_range;
        let stat_on = move |measure: &BaseMeasure, sample: &EmpiricalCounts| -> Option<f64> {
            let covered = measure.covering_data(sample).ok()?;
            match method {
                GofMethod::Pearson => Some(pearson_chisq(sample, &covered).ok()?.statistic),
                GofMethod::Lpgof => {
                    let basis = basis_for(&covered, order).ok()?;
                    Some(lp_gof_with_basis(&basis, sample, selection).ok()?.statistic)
                }
            }
        };
        let boot_report = if double_boot {
            let spec_family = spec.family.clone();
            let truncation = spec.truncation.unwrap_or_default();
            double_bootstrap_test(
                |m, d, _| stat_on(m, d),
                move |d| {
                    let fam = spec_family.refit(d)?;
                    let bm = make_parametric(fam, truncation)?.covering_data(d)?;
                    if restrict {
                        bm.restricted_to_observed_range(d)
                    } else {
                        Ok(bm)
                    }
                },
                &data,
                b,
                seed,
            )?
        } else {
            let bm2 = bm.clone();
            parametric_bootstrap_test(
                move |d| stat_on(&bm2, d).unwrap_or(f64::INFINITY),
                &bm,
                &data,
                b,
                seed,
            )?
        };
        report.bootstrap = boot_report.bootstrap;
        report.note = Some(format!(
            "bootstrap p-value {} ({})",
            format_sig(boot_report.p_value),
            if double_boot {
                "parameters refit per replicate"
            } else {
                "fixed null parameters"
            },
        ));
        report.p_value = boot_report.p_value;
    }

    let config = json!({
        "command": "gof",
        "data": data_path.display().to_string(),
        "model": model.model.display().to_string(),
        "restrict_range": model.restrict_range,
        "method": match method { GofMethod::Lpgof => "lpgof", GofMethod::Pearson => "pearson" },
        "select": selection,
        "order": order,
        "boot": boot,
        "double_boot": double_boot,
    });
    let meta = meta_for(seed, config);
    match format {
        ReportFormat::Json => write_text(out, &report_json(&report, &meta)?)?,
        ReportFormat::Csv => write_text(out, &crate::io::gof_report_csv(&report, &meta))?,
    }
    println!(
        "gof: {} statistic {} df {} p {}",
        report.method,
        format_sig(report.statistic),
        report.df,
        format_sig(report.p_value)
    );
    Ok(())
}

#[derive(Serialize)]
struct EntropyReport {
    kl: f64,
    active: Vec<usize>,
    bootstrap_se: f64,
    test_p_value: f64,
    replicates: usize,
}

fn cmd_entropy(
    data_path: &Path,
    model: &ModelArgs,
    selection: Selection,
    order: usize,
    boot: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let data = parse_counts(data_path)?;
    let spec = load_model_spec(&model.model)?;
    let bm = prepare_measure(&spec, &data, model.restrict_range)?;
    let basis = basis_for(&bm, order)?;
    let seed = resolve_seed(seed);

    let kl_of = |basis: &LpBasis, d: &EmpiricalCounts| -> Result<(f64, Vec<usize>)> {
        let coefs = lp_coefficients(basis, d)?;
        let active = select(&coefs, selection);
        if active.is_empty() {
            return Ok((0.0, active));
        }
        let model = SharpenedModel::maxent_fit(basis, &coefs.estimates, &active)?;
        Ok((relative_entropy(&model)?, active))
    };
    let (kl, active) = kl_of(&basis, &data)?;

    let basis_se = basis.clone();
    let se = bootstrap_se(
        move |d| kl_of(&basis_se, d).map(|(v, _)| v).unwrap_or(0.0),
        &data,
        boot,
        seed,
    )?;
    let basis_test = basis.clone();
    let test = parametric_bootstrap_test(
        move |d| kl_of(&basis_test, d).map(|(v, _)| v).unwrap_or(0.0),
        &bm,
        &data,
        boot.max(99),
        seed ^ 0x9e37,
    )?;

    let report = EntropyReport {
        kl,
        active,
        bootstrap_se: se,
        test_p_value: test.p_value,
        replicates: boot,
    };
    let config = json!({
        "command": "entropy",
        "data": data_path.display().to_string(),
        "model": model.model.display().to_string(),
        "restrict_range": model.restrict_range,
        "select": selection,
        "order": order,
        "boot": boot,
    });
    write_text(out, &report_json(&report, &meta_for(seed, config))?)?;
    println!(
        "entropy: KL {} +/- {} (test p {})",
        format_sig(report.kl),
        format_sig(report.bootstrap_se),
        format_sig(report.test_p_value)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_scan(
    data_path: &Path,
    model: &ModelArgs,
    b: usize,
    sigma: f64,
    order: usize,
    window: Option<String>,
    exact_tail: bool,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let data = parse_counts(data_path)?;
    let spec = load_model_spec(&model.model)?;
    let bm = prepare_measure(&spec, &data, model.restrict_range)?;
    let window = match window {
        None => None,
        Some(text) => {
            let parts: Vec<&str> = text.split(',').collect();
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad window bound {s:?}")))
            };
            match parts.as_slice() {
                [lo, hi] => Some((parse(lo)?, parse(hi)?)),
                _ => return Err(Error::Usage("window must be `lo,hi`".into())),
            }
        }
    };
    let seed = resolve_seed(seed);
    let settings = BumpScanSettings {
        max_order: order,
        window,
        approx_tail: !exact_tail,
    };
    let scan = bump_scan(&bm, &data, b, sigma, seed, &settings)?;

    let config = json!({
        "command": "scan",
        "data": data_path.display().to_string(),
        "model": model.model.display().to_string(),
        "b": b, "sigma": sigma, "order": order,
        "window": window.map(|(lo, hi)| vec![lo, hi]),
        "approx_tail": !exact_tail,
    });
    let meta = meta_for(seed, config);
    let mut text = format!(
        "# lp-sharpen {} seed={} config_hash={} threshold={} approximation={} regions={:?}\n",
        crate::VERSION,
        seed,
        meta.config_hash,
        format_sig(scan.threshold),
        scan.approximation,
        scan.regions
    );
    let in_region = |x: f64| scan.regions.iter().any(|&(lo, hi)| x >= lo && x <= hi);
    let rows: Vec<Vec<String>> = scan
        .grid
        .iter()
        .zip(scan.pval.iter().zip(&scan.neglog10))
        .map(|(&x, (&p, &nl))| {
            vec![
                format_sig(x),
                format_sig(p),
                format_sig(nl),
                u8::from(in_region(x)).to_string(),
            ]
        })
        .collect();
    text.push_str(&csv_table(&["x", "pval", "neglog10", "in_region"], &rows));
    write_text(out, &text)?;
    println!(
        "scan: {} regions at {} sigma{} -> {}",
        scan.regions.len(),
        sigma,
        if scan.approximation {
            " (tail approximation)"
        } else {
            ""
        },
        out.display()
    );
    Ok(())
}

fn cmd_dss(sources: &Path, model: &Path, m: usize, out: &Path) -> Result<()> {
    let spec = load_model_spec(model)?;
    let bm = spec.build()?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(sources)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no source files in {}",
            sources.display()
        )));
    }
    let counts: Vec<EmpiricalCounts> = files
        .iter()
        .map(|p| parse_counts(p))
        .collect::<Result<_>>()?;
    let matrix = lp_transform_matrix(&counts, &bm, m)?;
    let dss = dss_embed(&matrix)?;
    let rows: Vec<Vec<String>> = files
        .iter()
        .zip(dss.coords.iter().zip(&dss.discovery_index))
        .map(|(file, (&(x, y), &d))| {
            vec![
                file.file_name().unwrap().to_string_lossy().into_owned(),
                format_sig(x),
                format_sig(y),
                format_sig(d),
            ]
        })
        .collect();
    let config = json!({
        "command": "dss",
        "sources": sources.display().to_string(),
        "model": model.display().to_string(),
        "m": m,
    });
    let meta = meta_for(0, config);
    let mut text = format!(
        "# lp-sharpen {} config_hash={} singular_values={:?}\n",
        crate::VERSION,
        meta.config_hash,
        dss.singular_values
            .iter()
            .map(|&s| format_sig(s))
            .collect::<Vec<String>>()
    );
    text.push_str(&csv_table(
        &["source", "coord1", "coord2", "discovery_index"],
        &rows,
    ));
    write_text(out, &text)?;
    println!("dss: embedded {} sources -> {}", files.len(), out.display());
    Ok(())
}

#[derive(serde::Deserialize)]
struct CardConfig {
    ks: Vec<usize>,
    n_decks: usize,
    replications: usize,
    #[serde(default = "default_deck")]
    deck_size: usize,
    #[serde(default = "default_card_order")]
    order: usize,
}

fn default_deck() -> usize {
    52
}

fn default_card_order() -> usize {
    1
}

fn cmd_simulate_card(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg: CardConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
    let seed = resolve_seed(seed);
    let rows = card_study(
        &cfg.ks,
        cfg.n_decks,
        cfg.deck_size,
        cfg.replications,
        cfg.order,
        seed,
    )?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.k_shuffles.to_string(), format_sig(r.mean_p_value)])
        .collect();
    let config_value = json!({
        "command": "simulate card",
        "ks": cfg.ks, "n_decks": cfg.n_decks,
        "replications": cfg.replications, "deck_size": cfg.deck_size,
        "order": cfg.order,
    });
    let meta = meta_for(seed, config_value);
    let mut text = format!(
        "# lp-sharpen {} seed={} config_hash={}\n",
        crate::VERSION,
        seed,
        meta.config_hash
    );
    text.push_str(&csv_table(&["k_shuffles", "mean_p_value"], &table));
    write_text(out, &text)?;
    println!(
        "simulate card: {} shuffle counts -> {}",
        rows.len(),
        out.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct HepConfig {
    k: usize,
    n: u64,
    #[serde(default = "default_window")]
    window: (f64, f64),
    #[serde(default)]
    bump: Option<HepBump>,
}

#[derive(serde::Deserialize)]
struct HepBump {
    mass: f64,
    width: f64,
    fraction: f64,
}

fn default_window() -> (f64, f64) {
    (100.0, 250.0)
}

fn cmd_simulate_hep(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg: HepConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
    let seed = resolve_seed(seed);
    let bump = cfg.bump.as_ref().map(|b| (b.mass, b.width, b.fraction));
    let data = generate_hep(cfg.k, cfg.n, bump, cfg.window, seed)?;
    let config_value = json!({
        "command": "simulate hep",
        "k": cfg.k, "n": cfg.n, "window": [cfg.window.0, cfg.window.1],
        "bump": bump.map(|(m, w, f)| json!({"mass": m, "width": w, "fraction": f})),
    });
    let meta = meta_for(seed, config_value);
    let mut text = format!(
        "# lp-sharpen {} seed={} config_hash={}\n",
        crate::VERSION,
        seed,
        meta.config_hash
    );
    text.push_str(&counts_csv(&data));
    write_text(out, &text)?;
    println!(
        "simulate hep: n={} over {} cells -> {}",
        data.n(),
        cfg.k,
        out.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct PowerConfig {
    k: usize,
    null: NullSpec,
    alternative: AltSpec,
    n_grid: Vec<u64>,
    #[serde(default = "default_b")]
    b_null: usize,
    #[serde(default = "default_b")]
    b_alt: usize,
    #[serde(default = "default_power_level")]
    level: f64,
    methods: Vec<Method>,
}

fn default_b() -> usize {
    350
}

fn default_power_level() -> f64 {
    0.05
}

#[derive(serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NullSpec {
    Uniform,
    TwoCell,
    Hep {
        #[serde(default = "default_window")]
        window: (f64, f64),
    },
    Custom {
        pmf: Vec<f64>,
    },
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum AltSpec {
    Named(Alternative),
    HepBump {
        mass: f64,
        width: f64,
        fraction: f64,
    },
    Custom {
        pmf: Vec<f64>,
    },
}

fn cmd_simulate_power(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let raw = std::fs::read_to_string(config)?;
    let cfg: PowerConfig = serde_json::from_str(&raw)?;
    let seed = resolve_seed(seed);
    let null_pmf: Vec<f64> = match &cfg.null {
        NullSpec::Uniform => vec![1.0 / cfg.k as f64; cfg.k],
        NullSpec::TwoCell => two_cell_null(cfg.k)?,
        NullSpec::Hep { window } => crate::simulate::hep_null(cfg.k, *window)?.pmf().to_vec(),
        NullSpec::Custom { pmf } => pmf.clone(),
    };
    let alt_pmf: Vec<f64> = match &cfg.alternative {
        AltSpec::Named(kind) => make_alternative(kind, cfg.k)?,
        AltSpec::HepBump {
            mass,
            width,
            fraction,
        } => {
            let window = match &cfg.null {
                NullSpec::Hep { window } => *window,
                _ => default_window(),
            };
            let null = crate::simulate::hep_null(cfg.k, window)?;
            crate::simulate::hep_bump_pmf(&null, *mass, *width, *fraction)?
        }
        AltSpec::Custom { pmf } => pmf.clone(),
    };
    let spec = PowerStudySpec {
        null_pmf,
        alt_pmf,
        n_grid: cfg.n_grid.clone(),
        b_null: cfg.b_null,
        b_alt: cfg.b_alt,
        level: cfg.level,
        methods: cfg.methods.clone(),
        seed,
    };
    let rows = power_curve(&spec)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), r.method.clone(), format_sig(r.power)])
        .collect();
    let config_value: Value = serde_json::from_str(&raw)?;
    let meta = meta_for(
        seed,
        json!({"command": "simulate power", "config": config_value}),
    );
    let mut text = format!(
        "# lp-sharpen {} seed={} config_hash={}\n",
        crate::VERSION,
        seed,
        meta.config_hash
    );
    text.push_str(&csv_table(&["n", "method", "power"], &table));
    write_text(out, &text)?;
    println!("simulate power: {} rows -> {}", rows.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct PipelineReport {
    null_family: Value,
    n: u64,
    support_size: usize,
    coefficients: Vec<Value>,
    selection: Selection,
    active: Vec<usize>,
    gof: GofReport,
    fourier: Value,
    maxent: Value,
    kl: f64,
    kl_test_p: Option<f64>,
    verdict: String,
}

#[allow(clippy::too_many_arguments)]
fn cmd_pipeline(
    data_path: &Path,
    model: Option<&Path>,
    family: Option<&str>,
    trials: Option<u32>,
    selection: Selection,
    order: usize,
    restrict_range: bool,
    boot: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let data = parse_counts(data_path)?;
    let spec = match (model, family) {
        (Some(path), None) => load_model_spec(path)?,
        (None, Some(name)) => {
            let family = match name {
                "poisson" => Family::fit_poisson(&data)?,
                "neg_binomial" => Family::fit_neg_binomial(&data)?,
                "binomial" => {
                    let trials = trials.ok_or_else(|| {
                        Error::Usage("--family binomial requires --trials".into())
                    })?;
                    Family::fit_binomial(trials, &data)?
                }
                other => {
                    return Err(Error::Usage(format!(
                        "unknown family {other:?} (expected poisson, binomial, or neg_binomial)"
                    )))
                }
            };
            ModelSpec {
                family,
                truncation: None,
            }
        }
        _ => {
            return Err(Error::Usage(
                "pipeline needs exactly one of --model or --family".into(),
            ))
        }
    };
    let bm = prepare_measure(&spec, &data, restrict_range)?;
    let basis = basis_for(&bm, order)?;
    let seed = resolve_seed(seed);

    let coefs = lp_coefficients(&basis, &data)?;
    let active = select(&coefs, selection);
    let gof = lp_gof_with_basis(&basis, &data, selection)?;
    let fourier = SharpenedModel::ds_fourier(&basis, &coefs, &active)?;
    let maxent = SharpenedModel::maxent_fit(&basis, &coefs.estimates, &active)?;
    let kl = relative_entropy(&maxent)?;

    let kl_test_p = if boot > 0 {
        let basis2 = basis.clone();
        let stat = move |d: &EmpiricalCounts| -> f64 {
            let coefs = match lp_coefficients(&basis2, d) {
                Ok(c) => c,
                Err(_) => return 0.0,
            };
            let active = select(&coefs, selection);
            if active.is_empty() {
                return 0.0;
            }
            SharpenedModel::maxent_fit(&basis2, &coefs.estimates, &active)
                .ok()
                .and_then(|m| relative_entropy(&m).ok())
                .unwrap_or(0.0)
        };
        Some(parametric_bootstrap_test(stat, &bm, &data, boot, seed)?.p_value)
    } else {
        None
    };

    let verdict = if active.is_empty() {
        "model accepted: no significant departures detected".to_string()
    } else {
        format!("sharpening suggested on orders {active:?}")
    };
    let table: Vec<Value> = coefs
        .z_scores()
        .iter()
        .zip(&coefs.estimates)
        .map(|(&(order, z), &(_, lp))| json!({"order": order, "lp": lp, "z": z}))
        .collect();
    let report = PipelineReport {
        null_family: serde_json::to_value(&spec)?,
        n: data.n(),
        support_size: bm.len(),
        coefficients: table,
        selection,
        active: active.clone(),
        gof,
        fourier: json!({
            "active": fourier.active(),
            "coefficients": fourier.coefficients(),
            "negative": fourier.is_negative(),
            "pmf": fourier.pmf(),
        }),
        maxent: json!({
            "active": maxent.active(),
            "theta": maxent.coefficients(),
            "psi": maxent.psi(),
            "pmf": maxent.pmf(),
        }),
        kl,
        kl_test_p,
        verdict,
    };

    println!("pipeline: n = {}, support = {} points", data.n(), bm.len());
    for row in &report.coefficients {
        println!(
            "  order {} LP {} (z {})",
            row["order"],
            format_sig(row["lp"].as_f64().unwrap()),
            format_sig(row["z"].as_f64().unwrap())
        );
    }
    println!(
        "  statistic {} df {} p {}",
        format_sig(report.gof.statistic),
        report.gof.df,
        format_sig(report.gof.p_value)
    );
    println!(
        "  KL {}{}",
        format_sig(kl),
        match kl_test_p {
            Some(p) => format!(" (test p {})", format_sig(p)),
            None => String::new(),
        }
    );
    println!("  {}", report.verdict);

    if let Some(out) = out {
        let config = json!({
            "command": "pipeline",
            "data": data_path.display().to_string(),
            "model": model.map(|p| p.display().to_string()),
            "family": family,
            "trials": trials,
            "select": selection,
            "order": order,
            "restrict_range": restrict_range,
            "boot": boot,
        });
        write_text(out, &report_json(&report, &meta_for(seed, config))?)?;
    }
    Ok(())
}
