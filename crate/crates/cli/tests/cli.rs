use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use tempfile::TempDir;

use meterfill::features::{write_feature_csv, UserFeatures};
use meterfill::ingest::{write_hdf, AnalysisWindow, HDF_HEADER};
use meterfill::synthetic::{archetype_cohort, readings_for_usage, SyntheticUser};

const TARIFFS: &str = "supplier,plan_name,kind,rate_day,rate_night,rate_peak,standing_urban,standing_rural
Acme,Std,Fixed,0.35,0.35,0.35,300,320
Acme,NightSaver,DayNight,0.38,0.21,0.38,300,320
Volt,Smart,SmartToU,0.36,0.19,0.45,280,310
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meterfill")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn window() -> AnalysisWindow {
    AnalysisWindow::new(NaiveDate::from_ymd_opt(2023, 5, 1).unwrap()).unwrap()
}

fn hdf_file(dir: &Path, name: &str, user: &SyntheticUser, months: std::ops::Range<usize>) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, write_hdf(&readings_for_usage(&user.mprn, &window(), &user.usages[months]))).unwrap();
    path
}

/// Features of the 5 × 20 archetype cohort, written straight to CSV.
fn cohort_features(dir: &Path) -> PathBuf {
    let users: Vec<UserFeatures> = archetype_cohort(20, 0.1, 2024)
        .into_iter()
        .map(|u| UserFeatures::new(u.mprn, u.usages).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &users).unwrap();
    let path = dir.join("cohort.csv");
    fs::write(&path, buf).unwrap();
    path
}

fn fitted_model(dir: &Path) -> PathBuf {
    let features = cohort_features(dir);
    let out = dir.join("fit");
    ok(&["fit", s(&features), "--out", s(&out)]);
    out.join("model.json")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn ingest_writes_readings_and_quality() {
    let dir = TempDir::new().unwrap();
    let user = &archetype_cohort(1, 0.1, 9)[0];
    let file = hdf_file(dir.path(), "hdf.csv", user, 6..12);
    let out = dir.path().join("out");
    ok(&["ingest", s(&file), "--out", s(&out)]);
    let quality = csv_rows(&out.join("quality.csv"));
    assert_eq!(quality.len(), 12);
    assert_eq!(quality.iter().filter(|r| r[5] == "1").count(), 6);
    let readings = fs::read_to_string(out.join("readings.csv")).unwrap();
    assert!(readings.starts_with("mprn,timestamp_iso8601,read_type,value_kw\n"));
}

#[test]
fn bad_header_exits_2_naming_the_file() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("broken_export.csv");
    fs::write(&file, "meter,kw,type,when\n10000000000,0.1,Import (kW),01-05-2023 00:30\n").unwrap();
    let out = run(&["ingest", s(&file), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken_export.csv"));
}

#[test]
fn row_diagnostics_are_warnings() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("hdf.csv");
    fs::write(
        &file,
        format!("{HDF_HEADER}\n10000000000,0.2,Import (kW),01-06-2023 00:30\n10000000000,abc,Import (kW),01-06-2023 01:00\n"),
    )
    .unwrap();
    let out = run(&["ingest", s(&file), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn two_files_for_one_meter_are_merged() {
    let dir = TempDir::new().unwrap();
    let user = &archetype_cohort(1, 0.1, 9)[0];
    let a = hdf_file(dir.path(), "a.csv", user, 0..7);
    let b = hdf_file(dir.path(), "b.csv", user, 5..12);
    let out = dir.path().join("out");
    ok(&["ingest", s(&a), s(&b), "--out", s(&out)]);
    let quality = csv_rows(&out.join("quality.csv"));
    assert_eq!(quality.len(), 12);
    assert!(quality.iter().all(|r| r[5] == "0"));
    // one reading per interval, minus the one stamped at the window end
    assert_eq!(csv_rows(&out.join("readings.csv")).len(), 366 * 48 - 1);
}

#[test]
fn fit_selects_five_profiles() {
    let dir = TempDir::new().unwrap();
    let features = cohort_features(dir.path());
    let out = dir.path().join("out");
    ok(&["fit", s(&features), "--k-range", "2..8", "--out", s(&out)]);
    let model = fs::read_to_string(out.join("model.json")).unwrap();
    assert!(model.contains("\"k\": 5"));
    let elbow = csv_rows(&out.join("elbow.csv"));
    assert_eq!(elbow.len(), 7);
    let selected: Vec<&str> = elbow.iter().filter(|r| r[3] == "1").map(|r| r[0].as_str()).collect();
    assert_eq!(selected, ["5"]);

    ok(&["fit", s(&features), "--k-range", "3..3", "--out", s(&out)]);
    assert_eq!(csv_rows(&out.join("elbow.csv")).len(), 1);
    assert!(fs::read_to_string(out.join("model.json")).unwrap().contains("\"k\": 3"));
}

#[test]
fn fit_with_too_few_users_exits_2() {
    let dir = TempDir::new().unwrap();
    let users: Vec<UserFeatures> = archetype_cohort(1, 0.1, 3)
        .into_iter()
        .take(3)
        .map(|u| UserFeatures::new(u.mprn, u.usages).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &users).unwrap();
    let features = dir.path().join("few.csv");
    fs::write(&features, buf).unwrap();
    let out = run(&["fit", s(&features), "--k", "5", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn backfill_flags_imputed_months_and_warns_past_six() {
    let dir = TempDir::new().unwrap();
    let model = fitted_model(dir.path());
    let cohort = archetype_cohort(1, 0.1, 2025);
    let users = vec![
        UserFeatures::new(cohort[0].mprn.clone(), cohort[0].usages.clone()).unwrap(),
        UserFeatures::new(cohort[1].mprn.clone(), cohort[1].usages[6..].to_vec()).unwrap(),
        UserFeatures::new(cohort[2].mprn.clone(), cohort[2].usages[8..].to_vec()).unwrap(),
    ];
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &users).unwrap();
    let features = dir.path().join("features.csv");
    fs::write(&features, buf).unwrap();

    let out_dir = dir.path().join("out");
    let out = run(&["backfill", s(&features), "--model", s(&model), "--out", s(&out_dir)]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stdout.contains(&format!("{}: no back-fill needed", cohort[0].mprn)));
    assert!(stderr.contains(&format!("{}: 8 months missing", cohort[2].mprn)));
    assert!(!stderr.contains(cohort[1].mprn.as_str()));

    let rows = csv_rows(&out_dir.join("completed.csv"));
    assert_eq!(rows.len(), 3 * 36);
    let imputed = |m: &str| rows.iter().filter(|r| r[0] == m && r[4] == "1").count();
    assert_eq!(imputed(cohort[0].mprn.as_str()), 0);
    assert_eq!(imputed(cohort[1].mprn.as_str()), 6 * 3);
    assert_eq!(imputed(cohort[2].mprn.as_str()), 8 * 3);
}

#[test]
fn evaluate_writes_a_profile_by_duration_table() {
    let dir = TempDir::new().unwrap();
    let model = fitted_model(dir.path());
    let features = dir.path().join("cohort.csv");
    let out = dir.path().join("out");
    ok(&["evaluate", s(&features), "--model", s(&model), "--max-removed", "3", "--out", s(&out)]);
    let rows = csv_rows(&out.join("holdout.csv"));
    assert_eq!(rows.len(), 100 * 5 * 3);
    let first_user: Vec<_> = rows.iter().filter(|r| r[0] == rows[0][0]).collect();
    assert_eq!(first_user.len(), 15);
    for d in ["1", "2", "3"] {
        assert_eq!(first_user.iter().filter(|r| r[2] == d && r[4] == "1").count(), 1);
    }
    assert!(rows.iter().all(|r| ("1"..="5").contains(&r[1].as_str())));

    let out = run(&["evaluate", s(&features), "--model", s(&model), "--max-removed", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bill_ranks_plans_and_rejects_an_empty_catalog() {
    let dir = TempDir::new().unwrap();
    let model = fitted_model(dir.path());
    let user = &archetype_cohort(1, 0.1, 2025)[1];
    let hdf = hdf_file(dir.path(), "hdf.csv", user, 6..12);
    let tariffs = dir.path().join("tariffs.csv");
    fs::write(&tariffs, TARIFFS).unwrap();
    let out = dir.path().join("out");
    ok(&["report", s(&hdf), "--model", s(&model), "--tariffs", s(&tariffs), "--out", s(&out)]);
    let bills = csv_rows(&out.join(format!("bills_{}.csv", user.mprn)));
    assert_eq!(bills.len(), 3);
    let totals: Vec<f64> = bills.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(totals.windows(2).all(|w| w[0] <= w[1]));

    let single = dir.path().join("single.csv");
    fs::write(&single, TARIFFS.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();
    let single_out = dir.path().join("single_out");
    ok(&["bill", s(&out.join("completed.csv")), "--tariffs", s(&single), "--out", s(&single_out)]);
    assert_eq!(csv_rows(&single_out.join(format!("bills_{}.csv", user.mprn))).len(), 1);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, TARIFFS.lines().next().unwrap()).unwrap();
    let res = run(&["bill", s(&out.join("completed.csv")), "--tariffs", s(&empty), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
}

fn file_pipeline(hdf: &[&Path], model: &Path, tariffs: &Path, out: &Path) {
    let mut ingest = vec!["ingest"];
    ingest.extend(hdf.iter().map(|p| s(p)));
    ingest.extend(["--out", s(out)]);
    ok(&ingest);
    ok(&["features", s(&out.join("readings.csv")), "--out", s(out)]);
    ok(&["backfill", s(&out.join("features.csv")), "--model", s(model), "--out", s(out)]);
    ok(&["bill", s(&out.join("completed.csv")), "--tariffs", s(tariffs), "--out", s(out)]);
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn file_pipeline_is_idempotent_and_matches_report() {
    let dir = TempDir::new().unwrap();
    let model = fitted_model(dir.path());
    let tariffs = dir.path().join("tariffs.csv");
    fs::write(&tariffs, TARIFFS).unwrap();
    let cohort = archetype_cohort(1, 0.1, 77);
    let a = hdf_file(dir.path(), "a.csv", &cohort[0], 0..12);
    let b = hdf_file(dir.path(), "b.csv", &cohort[3], 5..12);
    let hdf = [a.as_path(), b.as_path()];

    let first = dir.path().join("first");
    let second = dir.path().join("second");
    file_pipeline(&hdf, &model, &tariffs, &first);
    file_pipeline(&hdf, &model, &tariffs, &second);
    assert_eq!(dir_contents(&first), dir_contents(&second));

    let report = dir.path().join("report");
    ok(&["report", s(&a), s(&b), "--model", s(&model), "--tariffs", s(&tariffs), "--out", s(&report)]);
    let staged: Vec<_> = dir_contents(&first)
        .into_iter()
        .filter(|(name, _)| name == "completed.csv" || name.starts_with("bills_"))
        .collect();
    assert_eq!(staged.len(), 3);
    assert_eq!(staged, dir_contents(&report));

    let refit = dir.path().join("refit");
    ok(&["fit", s(&dir.path().join("cohort.csv")), "--out", s(&refit)]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(refit.join("model.json")).unwrap());
}
