use std::collections::BTreeMap;

use bodynet::config::ValidatedConfig;
use bodynet::io::sweep::{run_sweep, Sweep, SweepReport, SweepSpec, AGGREGATE_METRICS};

fn small_sweep() -> Sweep {
    let spec = SweepSpec::from_toml_str(
        "seeds = 5\npackets = 200\ntau = 1.0\n[channel]\nkind = \"scenario1\"\n[axes]\nn_nodes = [4]\nn_relays = [1, 2]\nload = [0.1, 0.3]\n",
    )
    .unwrap();
    Sweep::new(spec, ValidatedConfig::default(), None).unwrap()
}

fn records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Linear-interpolation quantile, written out independently of the crate.
fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn rerun_is_byte_identical() {
    let a = run_sweep(&small_sweep());
    let b = run_sweep(&small_sweep());
    assert!(a.failures.is_empty());
    assert_eq!(a.long_csv(), b.long_csv());
    assert_eq!(a.aggregate_csv(), b.aggregate_csv());
    assert_eq!(a.ratio_csv(), b.ratio_csv());
}

#[test]
fn aggregate_recomputes_from_long_csv() {
    let report: SweepReport = run_sweep(&small_sweep());
    let (lh, long) = records(&report.long_csv());
    let (ah, agg) = records(&report.aggregate_csv());
    let col = |h: &[String], name: &str| h.iter().position(|c| c == name).unwrap();

    let mut groups: BTreeMap<(String, String), Vec<&Vec<String>>> = BTreeMap::new();
    for row in &long {
        groups.entry((row[col(&lh, "point")].clone(), row[col(&lh, "system")].clone())).or_default().push(row);
    }
    assert_eq!(groups.len(), agg.len());
    for row in &agg {
        let key = (row[col(&ah, "point")].clone(), row[col(&ah, "system")].clone());
        let runs = &groups[&key];
        assert_eq!(row[col(&ah, "runs")], runs.len().to_string());
        for metric in AGGREGATE_METRICS {
            let values: Vec<f64> = runs.iter().map(|r| r[col(&lh, metric)].parse().unwrap()).collect();
            for (suffix, q) in [("median", 0.5), ("q1", 0.25), ("q3", 0.75)] {
                let got: f64 = row[col(&ah, &format!("{metric}_{suffix}"))].parse().unwrap();
                let want = quantile(values.clone(), q);
                assert!(close(got, want), "{metric}_{suffix} {key:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn ratios_pair_runs_by_seed() {
    let report = run_sweep(&small_sweep());
    let (lh, long) = records(&report.long_csv());
    let (rh, ratios) = records(&report.ratio_csv());
    let col = |h: &[String], name: &str| h.iter().position(|c| c == name).unwrap();
    for row in &ratios {
        let point = &row[col(&rh, "point")];
        let energy = |system: &str| -> BTreeMap<String, f64> {
            long.iter()
                .filter(|r| &r[col(&lh, "point")] == point && r[col(&lh, "system")] == system)
                .map(|r| (r[col(&lh, "seed")].clone(), r[col(&lh, "energy_total_j")].parse().unwrap()))
                .collect()
        };
        let (p, b) = (energy("proposed"), energy("baseline"));
        let per_seed: Vec<f64> = p.iter().map(|(s, e)| e / b[s]).collect();
        let got: f64 = row[col(&rh, "energy_ratio_median")].parse().unwrap();
        assert!(close(got, quantile(per_seed, 0.5)));
    }
}
