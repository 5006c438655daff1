use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use funcanova::funcdata::{heatmap_binned, heatmap_stats, load_dataset, write_dataset, LabeledUnit, LoadOptions};
use funcanova::inference::TestReport;
use funcanova::pipeline::{accuracy, analyze as run_analysis, confusion_matrix, TrainedClassifier};
use funcanova::simulate::{
    gen_dataset, kernel_dissimilarity, mean_match_rate, noise_sweep, write_openface_fixture, GroundTruth, SweepReport,
};
use funcanova::FunctionalDataset;
use serde::Serialize;

use crate::config::RunConfig;
use crate::svg::{heat_grid, LineChart, Series};
use crate::CliError;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Numeric(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> funcanova::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Create the output directory and echo the effective configuration into it.
pub fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_json(&out.join("config.json"), cfg)
}

fn load(path: &Path, cfg: &RunConfig) -> Result<FunctionalDataset, CliError> {
    let (manifest, dir): (PathBuf, PathBuf) = if path.is_dir() {
        (path.join("manifest.csv"), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let opts = LoadOptions {
        control_group: cfg.ingest.control_group.clone(),
        variates: cfg.ingest.variates.clone(),
        grid_len: cfg.ingest.grid_len,
        t_end: None,
    };
    Ok(load_dataset(&manifest, &dir, &opts)?)
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    treatments: usize,
    groups: usize,
    variates: usize,
    units_per_group: usize,
    grid_points: usize,
    group_labels: &'a [String],
    variate_labels: &'a [String],
}

fn summarize(ds: &FunctionalDataset) -> DatasetSummary<'_> {
    DatasetSummary {
        treatments: ds.n_treatments(),
        groups: ds.n_groups(),
        variates: ds.n_variates(),
        units_per_group: ds.units_per_group(),
        grid_points: ds.grid().len(),
        group_labels: ds.group_labels(),
        variate_labels: ds.variate_labels(),
    }
}

pub fn ingest(cfg: &RunConfig, manifest: &Path, data_dir: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let dir = data_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let opts = LoadOptions {
        control_group: cfg.ingest.control_group.clone(),
        variates: cfg.ingest.variates.clone(),
        grid_len: cfg.ingest.grid_len,
        t_end: None,
    };
    let ds = load_dataset(manifest, &dir, &opts)?;
    write_dataset(&ds, &out.join("dataset"))?;
    let summary = summarize(&ds);
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "G={} D={} K={} grid={} points",
        summary.treatments, summary.variates, summary.units_per_group, summary.grid_points
    );
    Ok(())
}

#[derive(Serialize)]
struct Recovery {
    dissimilarity: f64,
    match_rate: f64,
}

#[derive(Serialize)]
struct ContrastSummary<'a> {
    variate: &'a str,
    group: &'a str,
    critical: f64,
    zones: Vec<[f64; 2]>,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    method: String,
    alpha: f64,
    n_perm: Option<usize>,
    contrasts: Vec<ContrastSummary<'a>>,
    max_constraint_violation: f64,
}

fn f_plot(report: &TestReport, title: &str) -> String {
    let xs = report.statistic.grid.points();
    let crit: Vec<f64> = (0..xs.len()).map(|i| report.critical_at(i)).collect();
    let mut series = vec![Series {
        name: "F",
        xs,
        ys: &report.statistic.values,
    }];
    let pointwise = report.critical_per_point.is_some();
    if pointwise {
        series.push(Series {
            name: "critical",
            xs,
            ys: &crit,
        });
    }
    let label = format!("{} α={}", report.method, report.alpha);
    LineChart {
        title,
        x_label: "t",
        y_label: "F",
        series,
        zones: report.zones.iter().map(|z| (z.start, z.end)).collect(),
        hline: (!pointwise).then_some((report.critical, label.as_str())),
        log_x: false,
    }
    .render()
}

pub fn analyze(cfg: &RunConfig, dataset: &Path, truth: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let ds = load(dataset, cfg)?;
    let a = run_analysis(&ds, &cfg.analysis)?;
    write_json(&out.join("model.json"), &a.model)?;
    write_json(&out.join("reports.json"), &a.reports)?;
    write_with(&out.join("coefficients.csv"), |w| a.coefficients.write_csv(w))?;
    write_with(&out.join("kernels.csv"), |w| a.kernels.write_csv(w))?;

    let mut zones = String::from("variate,group,start,end\n");
    let mut contrasts = Vec::new();
    for r in &a.reports {
        let variate = &ds.variate_labels()[r.contrast.variate];
        let group = &ds.group_labels()[r.contrast.group];
        let name = format!("{}_{}", slug(variate), slug(group));
        write_with(&out.join("tests").join(format!("{name}.csv")), |w| r.write_csv(w))?;
        write_text(
            &out.join("plots").join(format!("f_{name}.svg")),
            &f_plot(r, &format!("{variate}: {} vs {group}", ds.group_labels()[0])),
        )?;
        for z in &r.zones {
            zones.push_str(&format!("{variate},{group},{},{}\n", z.start, z.end));
        }
        contrasts.push(ContrastSummary {
            variate,
            group,
            critical: r.critical,
            zones: r.zones.iter().map(|z| [z.start, z.end]).collect(),
            warnings: &r.warnings,
        });
    }
    write_text(&out.join("zones.csv"), &zones)?;

    let xs = a.kernels.grid.points();
    for (d, variate) in ds.variate_labels().iter().enumerate() {
        let series = ds
            .group_labels()
            .iter()
            .enumerate()
            .map(|(g, name)| Series {
                name,
                xs,
                ys: &a.kernels.effects[d][g],
            })
            .collect();
        let chart = LineChart {
            title: &format!("{variate}: group effects"),
            x_label: "t",
            y_label: "effect",
            series,
            zones: Vec::new(),
            hline: Some((0.0, "")),
            log_x: false,
        };
        write_text(&out.join("plots").join(format!("kernels_{}.svg", slug(variate))), &chart.render())?;
    }

    let summary = AnalysisSummary {
        method: cfg.analysis.method.to_string(),
        alpha: cfg.analysis.alpha,
        n_perm: a.reports.first().and_then(|r| r.n_perm),
        contrasts,
        max_constraint_violation: a.kernels.max_constraint_violation(),
    };
    write_json(&out.join("summary.json"), &summary)?;

    if let Some(tp) = truth {
        let text = fs::read_to_string(tp).map_err(|e| CliError::Input(format!("cannot read {}: {e}", tp.display())))?;
        let truth: GroundTruth =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("bad truth file {}: {e}", tp.display())))?;
        let rec = Recovery {
            dissimilarity: kernel_dissimilarity(&a.kernels, &truth)?,
            match_rate: mean_match_rate(&a.reports, &truth),
        };
        write_json(&out.join("recovery.json"), &rec)?;
        println!("dissimilarity {} match rate {}", rec.dissimilarity, rec.match_rate);
    }
    println!(
        "{} test, alpha {}: {} contrasts, {} with significant zones",
        summary.method,
        summary.alpha,
        a.reports.len(),
        a.reports.iter().filter(|r| !r.zones.is_empty()).count()
    );
    Ok(())
}

#[derive(Serialize)]
struct ClassifySummary {
    train_units: usize,
    predicted_units: usize,
    accuracy: Option<f64>,
}

pub fn classify(cfg: &RunConfig, dataset: &Path, test: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let ds = load(dataset, cfg)?;
    let (train, eval_units): (FunctionalDataset, Vec<LabeledUnit>) = match test {
        Some(tp) => {
            let t = load(tp, cfg)?;
            if t.group_labels() != ds.group_labels() || t.variate_labels() != ds.variate_labels() {
                return Err(CliError::Input("test dataset groups or variates differ from the training dataset".into()));
            }
            let units = t.labeled_units();
            (ds, units)
        }
        None if cfg.classify.on_train => {
            let units = ds.labeled_units();
            (ds, units)
        }
        None => ds.split_units(cfg.classify.train_fraction)?,
    };
    let analysis = run_analysis(&train, &cfg.analysis)?;
    let clf = TrainedClassifier::fit(&analysis, &train, &cfg.analysis)?;
    let preds = clf.predict(&eval_units)?;
    let groups = train.group_labels();

    let mut csv = String::from("unit,truth,predicted\n");
    for p in &preds {
        let truth = p.truth.map(|g| groups[g].as_str()).unwrap_or("");
        csv.push_str(&format!("{},{},{}\n", p.unit_id, truth, groups[p.predicted]));
    }
    write_text(&out.join("predictions.csv"), &csv)?;

    let cm = confusion_matrix(&preds, groups.len())?;
    let mut text = format!("truth\\predicted,{}\n", groups.join(","));
    for (g, row) in cm.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        text.push_str(&format!("{},{}\n", groups[g], cells.join(",")));
    }
    write_text(&out.join("confusion.csv"), &text)?;
    write_with(&out.join("scores.csv"), |w| clf.score_table(&eval_units)?.write_csv(w))?;
    write_json(&out.join("classifier.json"), &clf)?;
    let summary = ClassifySummary {
        train_units: train.n_groups() * train.units_per_group(),
        predicted_units: preds.len(),
        accuracy: accuracy(&preds),
    };
    write_json(&out.join("summary.json"), &summary)?;
    match summary.accuracy {
        Some(acc) => println!("accuracy {acc} on {} units", preds.len()),
        None => println!("no units to predict"),
    }
    Ok(())
}

fn sweep_plot(report: &SweepReport, title: &str, pick: fn(&funcanova::simulate::SweepSummary) -> f64) -> String {
    let summary = report.summary();
    let names: Vec<String> = report.methods.iter().map(|m| m.to_string()).collect();
    let per_method: Vec<Vec<f64>> = report
        .methods
        .iter()
        .map(|m| summary.iter().filter(|s| s.method == *m).map(pick).collect())
        .collect();
    LineChart {
        title,
        x_label: "noise sd (log scale)",
        y_label: title,
        series: names
            .iter()
            .zip(&per_method)
            .map(|(n, ys)| Series {
                name: n,
                xs: &report.sd_levels,
                ys,
            })
            .collect(),
        zones: Vec::new(),
        hline: None,
        log_x: true,
    }
    .render()
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let report = noise_sweep(&cfg.simulation, &cfg.sweep.sd_levels, cfg.sweep.reps, &cfg.sweep.methods)?;
    write_with(&out.join("sweep.csv"), |w| report.write_csv(w))?;
    write_json(&out.join("sweep.json"), &report)?;
    let mut text = String::from("sd,method,dissimilarity,match_rate,accuracy\n");
    for s in report.summary() {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            s.sd, s.method, s.dissimilarity, s.match_rate, s.accuracy
        ));
        println!(
            "sd {:<5} {:<12} dissimilarity {:.4}  match {:.4}  accuracy {:.4}",
            s.sd,
            s.method.to_string(),
            s.dissimilarity,
            s.match_rate,
            s.accuracy
        );
    }
    write_text(&out.join("summary.csv"), &text)?;
    let plots = out.join("plots");
    write_text(&plots.join("dissimilarity.svg"), &sweep_plot(&report, "kernel dissimilarity", |s| s.dissimilarity))?;
    write_text(&plots.join("match_rate.svg"), &sweep_plot(&report, "zone matching rate", |s| s.match_rate))?;
    write_text(&plots.join("accuracy.svg"), &sweep_plot(&report, "classification correctness", |s| s.accuracy))?;
    Ok(())
}

pub fn heatmap(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<(), CliError> {
    let ds = load(dataset, cfg)?;
    let neutral = cfg.heatmap.neutral.clone().unwrap_or_else(|| ds.group_labels()[0].clone());
    let table = heatmap_stats(&ds, &neutral)?;
    write_with(&out.join("heatmap.csv"), |w| table.write_csv(w))?;
    write_json(&out.join("heatmap.json"), &table)?;
    for (name, pick) in [
        ("mean", (|r: &funcanova::funcdata::HeatmapRow| r.mean) as fn(&_) -> f64),
        ("cv", |r| r.cv),
        ("normalized", |r| r.normalized),
    ] {
        let values: Vec<Vec<f64>> = ds
            .group_labels()
            .iter()
            .map(|g| {
                ds.variate_labels()
                    .iter()
                    .map(|v| table.row(g, v).map_or(f64::NAN, pick))
                    .collect()
            })
            .collect();
        let svg = heat_grid(&format!("{name} (neutral: {neutral})"), ds.group_labels(), ds.variate_labels(), &values);
        write_text(&out.join(format!("heatmap_{name}.svg")), &svg)?;
    }
    if let Some(n) = cfg.heatmap.bins {
        let bins = heatmap_binned(&ds, &neutral, n)?;
        let mut text = String::from("group,variate,bin,t_start,t_end,mean,cv,normalized\n");
        for b in bins {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                b.group, b.variate, b.bin, b.t_start, b.t_end, b.mean, b.cv, b.normalized
            ));
        }
        write_text(&out.join("heatmap_bins.csv"), &text)?;
    }
    for g in ds.group_labels() {
        if let Some(top) = table.ranked_by_mean(g).first() {
            println!("{g}: highest mean {} ({:.3})", top.variate, top.mean);
        }
    }
    Ok(())
}

pub fn generate_simulation(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (ds, truth) = gen_dataset(&cfg.simulation)?;
    let manifest = write_dataset(&ds, &out.join("dataset"))?;
    write_json(&out.join("truth.json"), &truth)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

pub fn generate_ravdess(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let manifest = write_openface_fixture(&cfg.fixture, &out.join("recordings"))?;
    println!("wrote {}", manifest.display());
    Ok(())
}
