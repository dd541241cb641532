use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use mixed_sustain::evaluation::{auc, cross_validate_subtypes, match_subtypes, pearson, positional_variance_matrix};
use mixed_sustain::gmm::{event_probability_pairs, fit_two_component};
use mixed_sustain::inference::{fit_sustain_with, subject_posteriors_with};
use mixed_sustain::io::{
    pvd_svg, read_cohort, read_samples, read_staging, write_cohort, write_metrics, write_pvd, write_samples,
    write_staging, write_truth, Config, MetricRow, ModelFile, RawTable,
};
use mixed_sustain::likelihood::LikelihoodEvaluator;
use mixed_sustain::model::derive_z_levels;
use mixed_sustain::simulation::{generate_ground_truth, simulate_cohort};
use mixed_sustain::{BiomarkerModelKind, CohortData, Error, EventTable, McmcSample};

use crate::{CrossvalArgs, EvaluateArgs, FitArgs, GmmArgs, SimulateArgs};

/// Whether every requested artifact could be produced.
pub enum Outcome {
    Complete,
    Incomplete,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> mixed_sustain::Result<()>,
{
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_config(path: &Path) -> Result<Config> {
    Config::read(open(path)?).with_context(|| format!("reading config {}", path.display()))
}

fn read_cohort_file(path: &Path, table: &EventTable) -> Result<CohortData> {
    read_cohort(open(path)?, table).with_context(|| format!("reading cohort {}", path.display()))
}

fn read_model_file(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelFile::from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let mut config = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.simulate.rng_seed = seed;
    }
    let table = config.table()?;
    let truth = generate_ground_truth(&config.simulate, &table)?;
    let sim = simulate_cohort(&truth, &table, &config.simulate)?;
    create_dir(&args.out)?;
    write_with(&args.out.join("cohort.csv"), |w| write_cohort(w, &sim.cohort, &table))?;
    write_with(&args.out.join("truth.csv"), |w| {
        write_truth(w, sim.cohort.subject_ids(), &sim.truth)
    })?;
    write_text(
        &args.out.join("model.json"),
        &ModelFile::new(&truth, &table, None).to_json()?,
    )?;
    info!(
        "simulated {} subjects over {} events into {}",
        sim.cohort.n_subjects(),
        table.n_events(),
        args.out.display()
    );
    Ok(Outcome::Complete)
}

fn apply_overrides(config: &mut Config, startpoints: Option<usize>, mcmc_iters: Option<usize>, seed: Option<u64>) {
    if let Some(n) = startpoints {
        config.fit.n_startpoints = n;
    }
    if let Some(n) = mcmc_iters {
        config.fit.mcmc_iterations = n;
    }
    if let Some(s) = seed {
        config.fit.rng_seed = s;
    }
}

pub fn fit(args: &FitArgs) -> Result<Outcome> {
    let mut config = read_config(&args.config)?;
    apply_overrides(&mut config, args.startpoints, args.mcmc_iters, args.seed);
    if let Some(c) = args.subtypes {
        config.fit.max_subtypes = c;
    }
    config.fit.validate()?;

    if args.derive_z_values {
        let raw = RawTable::read(open(&args.data)?)?;
        for spec in config
            .biomarkers
            .iter_mut()
            .filter(|s| s.kind == BiomarkerModelKind::ZScore)
        {
            let values: Vec<f64> = raw.numeric_column(&spec.name)?.into_iter().flatten().collect();
            let (z_values, z_max) =
                derive_z_levels(&values).with_context(|| format!("deriving z levels for `{}`", spec.name))?;
            info!("`{}`: z_values {z_values:?}, z_max {z_max}", spec.name);
            spec.z_values = Some(z_values);
            spec.z_max = Some(z_max);
        }
    }
    let table = config.table()?;
    let cohort = read_cohort_file(&args.data, &table)?;
    create_dir(&args.out)?;
    write_text(
        &args.out.join("config_used.json"),
        &(serde_json::to_string_pretty(&config)? + "\n"),
    )?;

    let eval = LikelihoodEvaluator::new(&cohort, &table)?;
    let fit = fit_sustain_with(&eval, &table, &config.fit)?;
    let mut warnings = fit.warnings.clone();
    for fitted in &fit.models {
        let c = fitted.model.n_subtypes();
        info!(
            "C={c}: log-likelihood {:.4}, acceptance {:.3}",
            fitted.log_likelihood, fitted.acceptance_rate
        );
        let model_json = ModelFile::new(&fitted.model, &table, Some(fitted.log_likelihood)).to_json()?;
        write_text(&args.out.join(format!("model_C{c}.json")), &model_json)?;
        let samples = fitted.model.mcmc_samples();
        write_with(&args.out.join(format!("samples_C{c}.csv")), |w| {
            write_samples(w, samples)
        })?;
        for s in 0..c {
            let pvd = positional_variance_matrix(samples, s)?;
            write_with(&args.out.join(format!("pvd_C{c}_subtype{s}.csv")), |w| {
                write_pvd(w, &pvd, &table)
            })?;
        }
        let staging = subject_posteriors_with(&eval, &fitted.model);
        for &j in &staging.excluded {
            warnings.push(format!(
                "C={c}: subject `{}` has zero likelihood under every subtype and stage; excluded from staging",
                cohort.subject_ids()[j]
            ));
        }
        write_with(&args.out.join(format!("staging_C{c}.csv")), |w| {
            write_staging(w, cohort.subject_ids(), &staging, c, table.n_stages())
        })?;
    }
    let mut text = warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_text(&args.out.join("warnings.txt"), &text)?;
    for w in &warnings {
        warn!("{w}");
    }
    if fit.models.len() < config.fit.max_subtypes {
        return Ok(Outcome::Incomplete);
    }
    Ok(Outcome::Complete)
}

pub fn gmm(args: &GmmArgs) -> Result<Outcome> {
    let mut raw = RawTable::read(open(&args.data)?)?;
    let values = raw.numeric_column(&args.column)?;
    let mask = args
        .reference_column
        .as_deref()
        .map(|c| raw.boolean_column(c))
        .transpose()?;
    let flat: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let fit = fit_two_component(&flat, mask.as_deref()).with_context(|| format!("fitting column `{}`", args.column))?;
    let pairs = event_probability_pairs(&values, &fit);
    let name = args.name.as_deref().unwrap_or(&args.column);
    let column = |pick: fn((f64, f64)) -> f64| -> Vec<String> {
        pairs
            .iter()
            .map(|p| p.map(|p| pick(p).to_string()).unwrap_or_default())
            .collect()
    };
    raw.set_column(&format!("{name}:pnotE"), column(|p| p.0))?;
    raw.set_column(&format!("{name}:pE"), column(|p| p.1))?;
    write_with(&args.out, |w| raw.write(w))?;

    let params_path = args.params.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".gmm.json");
        PathBuf::from(p)
    });
    let sidecar = serde_json::json!({
        "column": args.column,
        "name": name,
        "reference_column": args.reference_column,
        "fit": fit,
    });
    write_text(&params_path, &(serde_json::to_string_pretty(&sidecar)? + "\n"))?;
    info!(
        "normal N({:.4}, {:.4}), abnormal N({:.4}, {:.4}) after {} iterations",
        fit.mu_normal, fit.sigma_normal, fit.mu_abnormal, fit.sigma_abnormal, fit.iterations
    );
    if !fit.converged {
        warn!("EM did not converge within {} iterations", fit.iterations);
        return Ok(Outcome::Incomplete);
    }
    Ok(Outcome::Complete)
}

pub fn crossval(args: &CrossvalArgs) -> Result<Outcome> {
    let mut config = read_config(&args.config)?;
    apply_overrides(&mut config, args.startpoints, args.mcmc_iters, args.seed);
    if let Some(c) = args.max_subtypes {
        config.fit.max_subtypes = c;
    }
    config.fit.validate()?;
    let table = config.table()?;
    let cohort = read_cohort_file(&args.data, &table)?;
    let cv = cross_validate_subtypes(&cohort, &table, &config.fit, args.folds)?;
    for w in &cv.warnings {
        warn!("{w}");
    }

    write_with(&args.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "n_subtypes".to_string(),
            "held_out_log_likelihood".into(),
            "selected".into(),
        ];
        header.extend((0..args.folds).map(|f| format!("fold{f}")));
        out.write_record(&header)?;
        for (c, total) in cv.held_out.iter().enumerate() {
            let mut rec = vec![
                (c + 1).to_string(),
                total.to_string(),
                u8::from(c + 1 == cv.selected).to_string(),
            ];
            rec.extend(cv.per_fold.iter().map(|f| f[c].to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })?;
    println!("selected_subtypes={}", cv.selected);
    if cv.held_out.iter().any(|v| !v.is_finite()) {
        return Ok(Outcome::Incomplete);
    }
    Ok(Outcome::Complete)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let model_file = read_model_file(&args.model)?;
    let table = model_file.table()?;
    let model = model_file.to_model(&table)?;
    let mut rows = Vec::new();

    if let Some(truth_path) = &args.truth {
        let truth = read_model_file(truth_path)?
            .to_model(&table)
            .with_context(|| format!("{} is incompatible with {}", truth_path.display(), args.model.display()))?;
        let m = match_subtypes(&model, &truth)?;
        for (t, (&e, &tau)) in m.assignment.iter().zip(&m.taus).enumerate() {
            rows.push(MetricRow::new("kendall_tau", Some(e), tau));
            rows.push(MetricRow::new("matched_true_subtype", Some(e), t as f64));
        }
        rows.push(MetricRow::new("mean_kendall_tau", None, m.mean_tau));
    } else if let (Some(staging_path), Some(labels_path)) = (&args.staging, &args.labels) {
        rows.extend(label_metrics(staging_path, labels_path, model.n_subtypes())?);
    } else {
        return Err(Error::InvalidArgument("pass --truth, or --staging with --labels".into()).into());
    }

    if let Some(svg_path) = &args.svg {
        let matrices = match &args.samples {
            Some(p) => {
                let samples = read_samples(open(p)?, &table).with_context(|| format!("reading {}", p.display()))?;
                (0..model.n_subtypes())
                    .map(|c| positional_variance_matrix(&samples, c))
                    .collect::<mixed_sustain::Result<Vec<_>>>()?
            }
            None => {
                let point = [McmcSample {
                    sequences: model.sequences().to_vec(),
                    log_likelihood: 0.0,
                }];
                (0..model.n_subtypes())
                    .map(|c| positional_variance_matrix(&point, c))
                    .collect::<mixed_sustain::Result<Vec<_>>>()?
            }
        };
        write_text(svg_path, &pvd_svg(&matrices, &table))?;
    }
    write_with(&args.out, |w| write_metrics(w, &rows))?;
    Ok(Outcome::Complete)
}

/// AUC of conversion against stage, and per-subtype stage-cognition
/// correlation, for the subjects present in both files.
fn label_metrics(staging_path: &Path, labels_path: &Path, n_subtypes: usize) -> Result<Vec<MetricRow>> {
    let staging = read_staging(open(staging_path)?).with_context(|| format!("reading {}", staging_path.display()))?;
    let labels = RawTable::read(open(labels_path)?).with_context(|| format!("reading {}", labels_path.display()))?;
    let id_col = labels.column_index("subject_id")?;
    let index: HashMap<&str, usize> = labels
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r[id_col].as_str(), i))
        .collect();
    let matched: Vec<(usize, usize)> = staging
        .iter()
        .enumerate()
        .filter_map(|(s, row)| index.get(row.subject_id.as_str()).map(|&l| (s, l)))
        .collect();
    if matched.len() < staging.len() {
        warn!("{} staged subjects have no labels", staging.len() - matched.len());
    }
    let has = |c: &str| labels.headers.iter().any(|h| h == c);
    if !has("converter") && !has("cognition") {
        return Err(Error::Column {
            column: "converter".into(),
            reason: "labels need a `converter` or `cognition` column".into(),
        }
        .into());
    }

    let mut rows = Vec::new();
    if has("converter") {
        let conv = labels.boolean_column("converter")?;
        let y: Vec<bool> = matched.iter().map(|&(_, l)| conv[l]).collect();
        let expected: Vec<f64> = matched.iter().map(|&(s, _)| staging[s].expected_stage).collect();
        let ml: Vec<f64> = matched.iter().map(|&(s, _)| staging[s].ml_stage as f64).collect();
        match (auc(&expected, &y), auc(&ml, &y)) {
            (Ok(a), Ok(b)) => {
                rows.push(MetricRow::new("auc_expected_stage", None, a));
                rows.push(MetricRow::new("auc_ml_stage", None, b));
            }
            (Err(e), _) | (_, Err(e)) => warn!("AUC not computed: {e}"),
        }
    }
    if has("cognition") {
        let cog = labels.numeric_column("cognition")?;
        let points: Vec<(usize, f64, f64)> = matched
            .iter()
            .filter_map(|&(s, l)| cog[l].map(|c| (staging[s].ml_subtype, staging[s].expected_stage, c)))
            .collect();
        let mut push = |subtype: Option<usize>| {
            let (x, y): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|p| subtype.is_none_or(|c| p.0 == c))
                .map(|p| (p.1, p.2))
                .unzip();
            match pearson(&x, &y) {
                Ok(r) => rows.push(MetricRow::new("pearson_stage_cognition", subtype, r)),
                Err(e) => warn!("stage-cognition correlation for {subtype:?} not computed: {e}"),
            }
        };
        push(None);
        for c in 0..n_subtypes {
            push(Some(c));
        }
    }
    Ok(rows)
}
