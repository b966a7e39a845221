use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use meterfill::backfill::{
    backfill_with, read_completed_csv, write_completed_csv, BackfillOptions, BackfillResult,
    VALIDATED_MISSING_MONTHS,
};
use meterfill::clustering::{assign_partial_with, choose_k, kmeans_fit_labeled, select_k, ClusterModel, Truncation};
use meterfill::evaluation::{holdout_eval, write_holdout_csv};
use meterfill::features::{aggregate_monthly, read_feature_csv, write_feature_csv, ProfileVector, UserFeatures};
use meterfill::ingest::{
    assess_months, merge_series, parse_hdf, read_canonical_csv, trim_window, write_canonical_csv,
    write_quality_csv, AnalysisWindow, Mprn, RawReading, ReadingSeries,
};
use meterfill::tariff::{parse_tariffs, rank_plans, write_bill_csv, TariffPlan};

use crate::Config;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn output(cfg: &Config, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let path = cfg.out.join(name);
    fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn load_model(cfg: &Config) -> Result<ClusterModel> {
    let Some(path) = &cfg.model else {
        bail!("--model is required");
    };
    ClusterModel::from_json(&read_text(path)?).with_context(|| path.display().to_string())
}

fn load_plans(cfg: &Config) -> Result<Vec<TariffPlan>> {
    let Some(path) = &cfg.tariffs else {
        bail!("--tariffs is required");
    };
    let plans = parse_tariffs(&read_text(path)?).with_context(|| path.display().to_string())?;
    if plans.is_empty() {
        bail!("{}: no tariff plans", path.display());
    }
    Ok(plans)
}

fn load_features(paths: &[PathBuf]) -> Result<Vec<UserFeatures>> {
    let mut users = Vec::new();
    for path in paths {
        let text = read_text(path)?;
        users.extend(read_feature_csv(text.as_bytes()).with_context(|| path.display().to_string())?);
    }
    Ok(users)
}

/// Parses HDF files, merges uploads per meter in file order and trims to the window.
fn load_hdf(files: &[PathBuf], window: &AnalysisWindow) -> Result<Vec<ReadingSeries>> {
    let mut parts: BTreeMap<Mprn, Vec<Vec<RawReading>>> = BTreeMap::new();
    for path in files {
        let parsed = parse_hdf(&read_text(path)?).with_context(|| path.display().to_string())?;
        for d in &parsed.diagnostics {
            eprintln!("warning: {}:{}: {}", path.display(), d.line, d.message);
        }
        let mut by_meter: BTreeMap<Mprn, Vec<RawReading>> = BTreeMap::new();
        for r in parsed.readings {
            by_meter.entry(r.mprn.clone()).or_default().push(r);
        }
        for (mprn, readings) in by_meter {
            parts.entry(mprn).or_default().push(readings);
        }
    }
    merge_groups(parts, window)
}

fn merge_groups(parts: BTreeMap<Mprn, Vec<Vec<RawReading>>>, window: &AnalysisWindow) -> Result<Vec<ReadingSeries>> {
    let mut out = Vec::new();
    for (mprn, p) in parts {
        let (series, dups) = merge_series(&p)?;
        if !dups.is_empty() {
            eprintln!("warning: {mprn}: {} duplicate readings, later values kept", dups.len());
        }
        let trimmed = trim_window(&series, window);
        if trimmed.is_empty() {
            eprintln!("warning: {mprn}: no readings inside the analysis window");
            continue;
        }
        out.push(trimmed);
    }
    Ok(out)
}

fn to_features(series: &[ReadingSeries], window: &AnalysisWindow) -> Vec<UserFeatures> {
    let mut users = Vec::new();
    for s in series {
        let quality = assess_months(s, window);
        match UserFeatures::new(s.mprn().clone(), aggregate_monthly(s, window, &quality)) {
            Ok(u) => users.push(u),
            Err(e) => eprintln!("warning: {}: skipped, {e}", s.mprn()),
        }
    }
    users
}

fn backfill_users(users: &[UserFeatures], model: &ClusterModel, options: BackfillOptions) -> Vec<(Mprn, BackfillResult)> {
    let mut out = Vec::new();
    for u in users {
        let r = match backfill_with(&u.usages, model, options) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: {}: skipped, {e}", u.mprn);
                continue;
            }
        };
        match r.missing_months() {
            0 => println!("{}: no back-fill needed (profile {})", u.mprn, r.cluster_id),
            n => {
                if n > VALIDATED_MISSING_MONTHS {
                    eprintln!(
                        "warning: {}: {n} months missing, accuracy is unvalidated beyond {VALIDATED_MISSING_MONTHS}",
                        u.mprn
                    );
                }
                println!("{}: filled {n} months from profile {}", u.mprn, r.cluster_id);
            }
        }
        out.push((u.mprn.clone(), r));
    }
    out
}

fn write_completed(cfg: &Config, rows: &[(Mprn, BackfillResult)]) -> Result<()> {
    let mut buf = Vec::new();
    write_completed_csv(&mut buf, rows)?;
    output(cfg, "completed.csv", &buf)?;
    Ok(())
}

fn write_bills(cfg: &Config, rows: &[(Mprn, BackfillResult)], plans: &[TariffPlan]) -> Result<()> {
    for (mprn, r) in rows {
        let bills = rank_plans(&r.completed, plans, cfg.locality)?;
        let mut buf = Vec::new();
        write_bill_csv(&mut buf, &bills)?;
        output(cfg, &format!("bills_{mprn}.csv"), &buf)?;
        let best = &bills[0];
        println!("{mprn}: cheapest {} {} at {:.2} EUR", best.plan.supplier, best.plan.plan_name, best.total);
    }
    Ok(())
}

pub fn ingest(files: &[PathBuf], cfg: &Config) -> Result<()> {
    let series = load_hdf(files, &cfg.window_start)?;
    let mut readings = Vec::new();
    let mut quality = Vec::new();
    for s in &series {
        readings.extend_from_slice(s.readings());
        let months = assess_months(s, &cfg.window_start);
        let excluded = months.iter().filter(|q| q.excluded).count();
        if excluded > 0 {
            eprintln!("warning: {}: {excluded} months excluded for missing data", s.mprn());
        }
        quality.push((s.mprn().clone(), months));
    }
    let mut buf = Vec::new();
    write_canonical_csv(&mut buf, &readings)?;
    output(cfg, "readings.csv", &buf)?;
    let mut buf = Vec::new();
    write_quality_csv(&mut buf, &quality)?;
    output(cfg, "quality.csv", &buf)?;
    Ok(())
}

pub fn features(readings: &Path, cfg: &Config) -> Result<()> {
    let text = read_text(readings)?;
    let all = read_canonical_csv(text.as_bytes()).with_context(|| readings.display().to_string())?;
    let mut parts: BTreeMap<Mprn, Vec<Vec<RawReading>>> = BTreeMap::new();
    for r in all {
        parts.entry(r.mprn.clone()).or_insert_with(|| vec![Vec::new()])[0].push(r);
    }
    let users = to_features(&merge_groups(parts, &cfg.window_start)?, &cfg.window_start);
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &users)?;
    output(cfg, "features.csv", &buf)?;
    Ok(())
}

pub fn fit(paths: &[PathBuf], cfg: &Config) -> Result<()> {
    let users = load_features(paths)?;
    let full: Vec<ProfileVector> = users.iter().filter(|u| u.profile.is_full()).map(|u| u.profile.clone()).collect();
    if full.len() < users.len() {
        eprintln!("warning: {} users without 12 observed months left out of the fit", users.len() - full.len());
    }
    let range = cfg.k_range.clone().unwrap_or(cfg.k..=cfg.k);
    if full.len() < *range.end() {
        bail!("need at least {} fully observed users, found {}", range.end(), full.len());
    }

    let mut elbow = String::from("k,inertia,silhouette,selected\n");
    let model = if range.start() == range.end() {
        let model = kmeans_fit_labeled(&full, *range.start(), cfg.seed, cfg.restarts)?.model;
        elbow.push_str(&format!("{},{},{},1\n", model.k, model.inertia, model.silhouette));
        model
    } else {
        let table = select_k(&full, range, cfg.seed, cfg.restarts)?;
        let chosen = choose_k(&table).expect("non-empty table");
        for c in &table {
            elbow.push_str(&format!("{},{},{},{}\n", c.k, c.inertia, c.silhouette, u8::from(c.k == chosen)));
        }
        table.into_iter().find(|c| c.k == chosen).expect("chosen k is in the table").fit.model
    };
    println!("k = {} (silhouette {:.4}, inertia {:.6})", model.k, model.silhouette, model.inertia);
    output(cfg, "model.json", model.to_json().as_bytes())?;
    output(cfg, "elbow.csv", elbow.as_bytes())?;
    Ok(())
}

pub fn assign(features: &Path, cfg: &Config) -> Result<()> {
    let model = load_model(cfg)?;
    let users = load_features(&[features.to_path_buf()])?;
    let mut csv = String::from("mprn,cluster_id,observed_months\n");
    for u in &users {
        let id = assign_partial_with(&u.profile, &model, Truncation::Renormalize)
            .with_context(|| u.mprn.to_string())?;
        csv.push_str(&format!("{},{id},{}\n", u.mprn, u.profile.observed_count()));
    }
    output(cfg, "assignments.csv", csv.as_bytes())?;
    Ok(())
}

pub fn backfill(features: &Path, options: BackfillOptions, cfg: &Config) -> Result<()> {
    let model = load_model(cfg)?;
    let users = load_features(&[features.to_path_buf()])?;
    write_completed(cfg, &backfill_users(&users, &model, options))
}

pub fn evaluate(features: &Path, max_removed: usize, options: BackfillOptions, cfg: &Config) -> Result<()> {
    let model = load_model(cfg)?;
    let users = load_features(&[features.to_path_buf()])?;
    let mut rows = Vec::new();
    for u in users.iter().filter(|u| u.profile.is_full()) {
        let matrix = holdout_eval(&u.usages, &model, max_removed, options).with_context(|| u.mprn.to_string())?;
        rows.push((u.mprn.clone(), matrix));
    }
    if rows.is_empty() {
        bail!("{}: no fully observed users to evaluate", features.display());
    }
    for d in 1..=max_removed {
        let mean = rows.iter().map(|(_, m)| m.cell(m.assigned[d - 1], d)).sum::<f64>() / rows.len() as f64;
        println!("{d} months removed: mean weighted SMAPE {mean:.2}% on the assigned profile");
    }
    let mut buf = Vec::new();
    write_holdout_csv(&mut buf, &rows)?;
    output(cfg, "holdout.csv", &buf)?;
    Ok(())
}

pub fn bill(completed: &Path, cfg: &Config) -> Result<()> {
    let plans = load_plans(cfg)?;
    let text = read_text(completed)?;
    let rows = read_completed_csv(text.as_bytes()).with_context(|| completed.display().to_string())?;
    write_bills(cfg, &rows, &plans)
}

pub fn report(files: &[PathBuf], options: BackfillOptions, cfg: &Config) -> Result<()> {
    let model = load_model(cfg)?;
    let plans = load_plans(cfg)?;
    let series = load_hdf(files, &cfg.window_start)?;
    let users = to_features(&series, &cfg.window_start);
    let rows = backfill_users(&users, &model, options);
    write_completed(cfg, &rows)?;
    write_bills(cfg, &rows, &plans)
}
