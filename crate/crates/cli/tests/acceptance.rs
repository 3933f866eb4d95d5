//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails. Runs under `cargo test` with the default harness off.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use clens_core::report::{parse_fixture_table, render_margin_table, render_table, Format, TableKind, TableLayout};
use clens_core::stats::{mann_whitney_u, wilcoxon_signed_rank, Alternative, Method, ZeroPolicy};
use clens_core::{
    compute_margin_table, validate_bundle, ActivationMatrix, AnnotationSet, AssignmentTable, ConceptAssignment,
    DatasetBundle, Ensemble, MarginRow, ThresholdSpec,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn clens(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_clens"))
        .args(args)
        .env("CLENS_LOG", "off")
        .output()
        .expect("run clens")
}

/// `clens stats wilcoxon` on a fixture pair file; returns (p, n, elapsed).
fn cli_wilcoxon(file: &str, alternative: &str) -> (f64, u64, Duration) {
    let path = fixtures().join("wilcoxon").join(file);
    let start = Instant::now();
    let out = clens(&[
        "stats",
        "wilcoxon",
        "--pairs",
        path.to_str().unwrap(),
        "--alternative",
        alternative,
        "--format",
        "json",
    ]);
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    (
        v["p_value"].as_f64().unwrap(),
        v["n"]["n_nonzero"].as_u64().unwrap(),
        elapsed,
    )
}

fn criterion_1() -> Outcome {
    let (p, n, t) = cli_wilcoxon("gt0.csv", "greater");
    let target = 0.0001221;
    outcome(
        n == 13 && (p - target).abs() <= 1e-7 && t < Duration::from_secs(1),
        format!("n={n} p={p:.7e} target={target} |diff|={:.1e} runtime={:.0?}", (p - target).abs(), t),
    )
}

fn criterion_2() -> Outcome {
    let (p, n, _) = cli_wilcoxon("gt20.csv", "greater");
    let target = 0.0004272;
    let exact = 14.0 / 32768.0;
    outcome(
        n == 15 && (p - target).abs() <= 1e-6,
        format!("n={n} p={p:.7e} target={target} exact 14/2^15={exact:.9} |diff|={:.1e}", (p - target).abs()),
    )
}

fn criterion_3() -> Outcome {
    let (p40, n40, _) = cli_wilcoxon("gt40.csv", "greater");
    let (p60, n60, _) = cli_wilcoxon("gt60.csv", "greater");
    let rel40 = (p40 - 0.0479).abs() / 0.0479;
    let rel60 = (p60 - 0.05803).abs() / 0.05803;
    let ok40 = n40 == 21 && rel40 <= 0.05;
    let ok60 = n60 == 23 && rel60 <= 0.05;
    let mut detail = format!(
        "theta=0.4: n={n40} p={p40:.5} target=0.0479 rel={rel40:.3} [{}]; theta=0.6: n={n60} p={p60:.5} target=0.05803 rel={rel60:.3} [{}]",
        if ok40 { "ok" } else { "miss" },
        if ok60 { "ok" } else { "miss" },
    );
    if !ok60 {
        let (two, _, _) = cli_wilcoxon("gt60.csv", "two-sided");
        detail.push_str(&format!("; two-sided p at theta=0.6 is {two:.5}"));
    }
    outcome(ok40 && ok60, detail)
}

/// Distinct values in random order.
fn tie_free(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
    v.shuffle(rng);
    v.into_iter().map(|x| x - 3.0).collect()
}

/// Exhaustive relabelling of the pooled sample: P(U ≥ u), P(U ≤ u).
fn mwu_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let u_of = |mask: u32| {
        let mut u = 0usize;
        for i in (0..n).filter(|i| mask >> i & 1 == 1) {
            for j in (0..n).filter(|j| mask >> j & 1 == 0) {
                u += usize::from(pooled[i] > pooled[j]);
            }
        }
        u
    };
    let observed = u_of((1u32 << a.len()) - 1);
    let (mut total, mut ge, mut le) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let u = u_of(mask);
        total += 1;
        ge += u64::from(u >= observed);
        le += u64::from(u <= observed);
    }
    let g = ge as f64 / total as f64;
    let l = le as f64 / total as f64;
    (g, l, (2.0 * g.min(l)).min(1.0))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for n1 in 1..10 {
        for n2 in 1..=(10 - n1) {
            for _ in 0..200 {
                let v = tie_free(&mut rng, n1 + n2);
                let (a, b) = v.split_at(n1);
                let (g, l, two) = mwu_oracle(a, b);
                for (alt, want) in [(Alternative::Greater, g), (Alternative::Less, l), (Alternative::TwoSided, two)] {
                    let r = mann_whitney_u(a, b, alt).unwrap();
                    if r.method != Method::Exact {
                        return outcome(false, format!("n1={n1} n2={n2}: normal approximation used"));
                    }
                    worst = worst.max((r.p_value - want).abs());
                }
                checked += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checked} samples over all n1+n2<=10, max |p - oracle| = {worst:.1e}"))
}

/// All 2^n sign assignments over the ranks of |d|.
fn wilcoxon_oracle(d: &[f64]) -> (f64, f64, f64) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut rank = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = (r + 1) as f64;
    }
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| rank[i]).sum();
        ge += u64::from(w >= observed);
        le += u64::from(w <= observed);
    }
    let total = (1u64 << n) as f64;
    let g = ge as f64 / total;
    let l = le as f64 / total;
    (g, l, (2.0 * g.min(l)).min(1.0))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for n in 1..=12 {
        for _ in 0..200 {
            let pairs: Vec<(f64, f64)> = loop {
                let mags = tie_free(&mut rng, n);
                let p: Vec<(f64, f64)> = mags
                    .iter()
                    .map(|&m| {
                        let x = rng.gen_range(0.0..10.0);
                        let d = (m + 4.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        (x + d, x)
                    })
                    .collect();
                let mut abs: Vec<f64> = p.iter().map(|(x, y)| (x - y).abs()).collect();
                abs.sort_by(f64::total_cmp);
                if abs.windows(2).all(|w| w[0] != w[1]) && abs[0] != 0.0 {
                    break p;
                }
            };
            let d: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
            let (g, l, two) = wilcoxon_oracle(&d);
            for (alt, want) in [(Alternative::Greater, g), (Alternative::Less, l), (Alternative::TwoSided, two)] {
                let r = wilcoxon_signed_rank(&pairs, alt, ZeroPolicy::Wilcoxon).unwrap();
                if r.method != Method::Exact {
                    return outcome(false, format!("n={n}: normal approximation used"));
                }
                worst = worst.max((r.p_value - want).abs());
            }
            checked += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{checked} samples over n<=12, max |p - oracle| = {worst:.1e}"))
}

struct Synthetic {
    bundle: DatasetBundle,
    table: AssignmentTable,
    /// (image labels, values) for the brute-force oracle.
    labels: Vec<Vec<String>>,
    values: Vec<Vec<f64>>,
}

fn random_bundle(rng: &mut ChaCha8Rng) -> Synthetic {
    let images = rng.gen_range(1..=32);
    let neurons = rng.gen_range(1..=16);
    let concepts = rng.gen_range(1..=8);
    // Grid values make θ·max ties likely, exercising the strict comparison.
    let values: Vec<Vec<f64>> = (0..images)
        .map(|_| {
            (0..neurons)
                .map(|_| if rng.gen_bool(0.35) { 0.0 } else { f64::from(rng.gen_range(1..=10)) / 10.0 })
                .collect()
        })
        .collect();
    let labels: Vec<Vec<String>> = (0..images)
        .map(|_| (0..concepts).filter(|_| rng.gen_bool(0.3)).map(|c| format!("c{c}")).collect())
        .collect();
    let mut assignments = Vec::new();
    for c in 0..concepts {
        for _ in 0..rng.gen_range(1..=2) {
            let size = rng.gen_range(1..=3.min(neurons));
            let mut pick: Vec<usize> = (0..neurons).collect();
            pick.shuffle(rng);
            let e = Ensemble::from_indices(&pick[..size]).unwrap();
            if !assignments.iter().any(|a: &ConceptAssignment| a.concept == format!("c{c}") && a.ensemble == e) {
                assignments.push(ConceptAssignment::new(format!("c{c}"), e));
            }
        }
    }
    let table = AssignmentTable::new(assignments).unwrap();
    let ids: Vec<String> = (0..images).map(|i| format!("img{i}")).collect();
    let m = ActivationMatrix::new("synthetic", ids.clone(), neurons, values.concat()).unwrap();
    let mut ann = AnnotationSet::new("synthetic");
    for (id, l) in ids.iter().zip(&labels) {
        ann.insert(id.clone(), l.iter().cloned());
    }
    let (bundle, _) = validate_bundle(m, ann, &table).unwrap();
    Synthetic {
        bundle,
        table,
        labels,
        values,
    }
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

/// Brute-force row: per image, per neuron, straight from the definitions.
fn oracle_row(s: &Synthetic, concept: &str, ens: &[usize], thetas: &[f64]) -> Option<(f64, Vec<f64>, usize, usize)> {
    let neurons = s.values[0].len();
    let maxima: Vec<f64> = (0..neurons).map(|n| s.values.iter().map(|r| r[n]).fold(0.0, f64::max)).collect();
    let fires = |img: usize, theta: f64| ens.iter().all(|&n| s.values[img][n] > theta * maxima[n]);
    let targets: Vec<usize> = (0..s.values.len()).filter(|&i| s.labels[i].iter().any(|l| l == concept)).collect();
    let others: Vec<usize> = (0..s.values.len()).filter(|i| !targets.contains(i)).collect();
    if targets.is_empty() {
        return None;
    }
    let tla = pct(targets.iter().filter(|&&i| fires(i, 0.0)).count(), targets.len());
    let non = thetas
        .iter()
        .map(|&t| pct(others.iter().filter(|&&i| fires(i, t)).count(), others.len()))
        .collect();
    Some((tla, non, targets.len(), others.len()))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = ThresholdSpec::default();
    let mut rows_checked = 0;
    for case in 0..100 {
        let s = random_bundle(&mut rng);
        let table = compute_margin_table(&s.bundle, &s.table, &spec);
        let mut expected = Vec::new();
        for a in s.table.iter() {
            let ens: Vec<usize> = a.ensemble.indices().collect();
            if let Some(o) = oracle_row(&s, &a.concept, &ens, spec.fractions()) {
                expected.push((a.concept.clone(), a.ensemble.clone(), o));
            }
        }
        if table.rows.len() != expected.len() {
            return outcome(false, format!("case {case}: {} rows, oracle has {}", table.rows.len(), expected.len()));
        }
        for (row, (concept, ens, (tla, non, nt, nn))) in table.rows.iter().zip(&expected) {
            let got: Vec<f64> = row.non_tla_pct.iter().map(|t| t.pct).collect();
            if &row.concept != concept || &row.ensemble != ens || row.tla_pct != *tla || &got != non || row.n_target != *nt || row.n_non_target != *nn {
                return outcome(false, format!("case {case}: row {concept} [{ens}] differs from oracle"));
            }
            rows_checked += 1;
        }
    }
    outcome(true, format!("100 bundles, {rows_checked} rows identical to per-image enumeration"))
}

fn random_thresholds(rng: &mut ChaCha8Rng) -> ThresholdSpec {
    let mut t: Vec<f64> = (0..rng.gen_range(1..=6)).map(|_| f64::from(rng.gen_range(0..20)) / 20.0).collect();
    t.push(0.0);
    t.sort_by(f64::total_cmp);
    t.dedup();
    ThresholdSpec::new(t).unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let per_property = 250;
    let mut failures = Vec::new();

    for case in 0..per_property {
        let s = random_bundle(&mut rng);
        let spec = random_thresholds(&mut rng);
        for row in compute_margin_table(&s.bundle, &s.table, &spec).rows {
            if row.non_tla_pct.windows(2).any(|w| w[1].pct > w[0].pct) {
                failures.push(format!("monotone-theta case {case}"));
            }
        }
    }

    for case in 0..per_property {
        let s = random_bundle(&mut rng);
        let spec = ThresholdSpec::default();
        let neurons = s.bundle.neuron_count();
        let mut all: Vec<usize> = (0..neurons).collect();
        all.shuffle(&mut rng);
        let big = &all[..rng.gen_range(1..=neurons.min(5))];
        let small = &big[..rng.gen_range(1..=big.len())];
        let concept = s.table.iter().next().unwrap().concept.clone();
        let t = AssignmentTable::new(vec![
            ConceptAssignment::new(concept.clone(), Ensemble::from_indices(small).unwrap()),
            ConceptAssignment::new(concept.clone(), Ensemble::from_indices(big).unwrap()),
        ]);
        let Ok(t) = t else { continue }; // small == big
        let rows = compute_margin_table(&s.bundle, &t, &spec).rows;
        if rows.len() == 2 {
            let find = |e: &[usize]| rows.iter().find(|r| r.ensemble == Ensemble::from_indices(e).unwrap()).unwrap();
            let (a, b) = (find(small), find(big));
            let ok = b.tla_pct <= a.tla_pct && b.non_tla_pct.iter().zip(&a.non_tla_pct).all(|(x, y)| x.pct <= y.pct);
            if !ok {
                failures.push(format!("ensemble-subset case {case}"));
            }
        }
    }

    for case in 0..per_property {
        let s = random_bundle(&mut rng);
        let spec = random_thresholds(&mut rng);
        let neurons = s.bundle.neuron_count();
        // Powers of two scale exactly, so invariance must be bit-for-bit.
        let scales: Vec<f64> = (0..neurons).map(|_| 2f64.powi(rng.gen_range(-8..=8))).collect();
        let m = &s.bundle.activation;
        let scaled: Vec<f64> = m.rows().flat_map(|(_, r)| r.iter().zip(&scales).map(|(v, k)| v * k).collect::<Vec<_>>()).collect();
        let m2 = ActivationMatrix::new("synthetic", m.image_ids().to_vec(), neurons, scaled).unwrap();
        let (b2, _) = validate_bundle(m2, s.bundle.annotations.clone(), &s.table).unwrap();
        let rows = |b: &DatasetBundle| -> Vec<MarginRow> { compute_margin_table(b, &s.table, &spec).rows };
        if rows(&s.bundle) != rows(&b2) {
            failures.push(format!("column-scale case {case}"));
        }
    }

    for case in 0..per_property {
        let a: Vec<f64> = (0..rng.gen_range(1..30)).map(|_| f64::from(rng.gen_range(0..15))).collect();
        let b: Vec<f64> = (0..rng.gen_range(1..30)).map(|_| f64::from(rng.gen_range(0..15))).collect();
        let ab = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
        let ba = mann_whitney_u(&b, &a, Alternative::TwoSided).unwrap();
        let g = mann_whitney_u(&a, &b, Alternative::Greater).unwrap();
        let l = mann_whitney_u(&b, &a, Alternative::Less).unwrap();
        let ok = ab.statistic + ba.statistic == (a.len() * b.len()) as f64
            && (ab.p_value - ba.p_value).abs() <= 1e-12
            && (g.p_value - l.p_value).abs() <= 1e-12;
        if !ok {
            failures.push(format!("mwu-swap case {case}"));
        }
    }

    for case in 0..per_property {
        let d: Vec<f64> = (0..rng.gen_range(1..45)).map(|_| f64::from(rng.gen_range(-12..=12))).collect();
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        let pos: Vec<(f64, f64)> = d.iter().map(|&v| (v, 0.0)).collect();
        let neg: Vec<(f64, f64)> = d.iter().map(|&v| (0.0, v)).collect();
        let n = d.iter().filter(|&&v| v != 0.0).count() as f64;
        let zp = ZeroPolicy::Wilcoxon;
        let gp = wilcoxon_signed_rank(&pos, Alternative::Greater, zp).unwrap();
        let ln = wilcoxon_signed_rank(&neg, Alternative::Less, zp).unwrap();
        let tp = wilcoxon_signed_rank(&pos, Alternative::TwoSided, zp).unwrap();
        let tn = wilcoxon_signed_rank(&neg, Alternative::TwoSided, zp).unwrap();
        let ok = (gp.p_value - ln.p_value).abs() <= 1e-12
            && (tp.p_value - tn.p_value).abs() <= 1e-12
            && gp.statistic + ln.statistic == n * (n + 1.0) / 2.0;
        if !ok {
            failures.push(format!("wilcoxon-negation case {case}"));
        }
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("5 properties x {per_property} randomized cases")
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    )
}

/// 61 buffet targets (51 active) and 10546 non-targets whose activation
/// counts at θ = 0, 0.2, 0.4, 0.6 are 3450, 1305, 391, 87.
fn buffet_bundle() -> (DatasetBundle, AssignmentTable) {
    let c = 64;
    let neuron = 62;
    let mut values = Vec::new();
    let mut ids = Vec::new();
    let mut ann = AnnotationSet::new("google");
    for i in 0..61 {
        let mut row = vec![0.0; c];
        row[neuron] = if i == 0 { 1.0 } else if i < 51 { 0.8 } else { 0.0 };
        values.extend(row);
        ids.push(format!("buffet_{i}"));
        ann.insert(format!("buffet_{i}"), ["buffet"]);
    }
    // Strictly above θ·max needs values just past each cut.
    let bands = [(87, 0.7), (391 - 87, 0.5), (1305 - 391, 0.3), (3450 - 1305, 0.1), (10546 - 3450, 0.0)];
    let mut k = 0;
    for (count, v) in bands {
        for _ in 0..count {
            let mut row = vec![0.0; c];
            row[neuron] = v;
            values.extend(row);
            ids.push(format!("other_{k}"));
            k += 1;
        }
    }
    let table = AssignmentTable::new(vec![ConceptAssignment::new("buffet", Ensemble::from_indices(&[neuron]).unwrap())]).unwrap();
    let m = ActivationMatrix::new("google", ids, c, values).unwrap();
    let (bundle, _) = validate_bundle(m, ann, &table).unwrap();
    (bundle, table)
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (file, kind, rows) in [
        ("paired_nontla.csv", TableKind::PairedDatasets, 33),
        ("google_margins.csv", TableKind::GoogleMargins, 52),
    ] {
        let text = std::fs::read_to_string(fixtures().join("reference").join(file)).unwrap();
        let layout = TableLayout::new(kind);
        let parsed = parse_fixture_table(&text, layout).unwrap();
        let rendered = render_table(&parsed, layout.decimals, Format::Csv);
        let reparsed = parse_fixture_table(&rendered, layout).unwrap();
        let ok = parsed.len() == rows && rendered == text && reparsed == parsed;
        pass &= ok;
        notes.push(format!("{file}: {} rows, round trip {}", parsed.len(), if ok { "exact" } else { "differs" }));
    }
    let (bundle, table) = buffet_bundle();
    let margins = compute_margin_table(&bundle, &table, &ThresholdSpec::default());
    let csv = render_margin_table(&margins, TableLayout::new(TableKind::GoogleMargins), Format::Csv);
    let line = csv.lines().nth(1).unwrap_or_default().to_owned();
    let want = r#"buffet,"62",83.607,32.714,12.374,3.708,0.825"#;
    pass &= line == want;
    notes.push(format!("computed buffet row {line}"));
    outcome(pass, notes.join("; "))
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// (status line, headers, body) of one HTTP/1.1 exchange.
fn http(port: u16, method: &str, path: &str, body: &str) -> Option<(String, String, Vec<u8>)> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).ok()?;
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).ok()?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n")?;
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let (status, headers) = head.split_once("\r\n").unwrap_or((&head, ""));
    Some((status.to_owned(), headers.to_ascii_lowercase(), raw[split + 4..].to_vec()))
}

fn ingest(name: &str, out: &Path) {
    let dir = fixtures().join(name);
    let p = |f: &str| dir.join(f).display().to_string();
    let o = clens(&[
        "ingest",
        "--activations",
        &p("activations.csv"),
        "--annotations",
        &p("annotations.json"),
        "--assignments",
        &p("assignments.json"),
        "--gallery",
        &p("gallery.json"),
        "--dataset-id",
        name,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("street");
    ingest("street", &store);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_clens"))
            .args([
                "serve",
                "--store",
                store.to_str().unwrap(),
                "--reference-store",
                store.to_str().unwrap(),
                "--port",
                &port.to_string(),
                "--static",
                fixtures().join("street/static").to_str().unwrap(),
            ])
            .env("CLENS_LOG", "off")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let start = Instant::now();
    while http(port, "GET", "/api/concepts", "").is_none() {
        if start.elapsed() > Duration::from_secs(20) {
            return outcome(false, "service did not start");
        }
        std::thread::sleep(Duration::from_millis(50));
    }

    let mut notes = Vec::new();
    let mut pass = true;
    for theta in ["0", "0.2", "0.4", "0.6"] {
        let (status, _, body) = http(port, "POST", "/api/analyze", &format!(r#"{{"image_id":"street_scene","theta":{theta}}}"#)).unwrap();
        let v: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let order: Vec<&str> = v.as_array().into_iter().flatten().filter_map(|d| d["concept"].as_str()).collect();
        let pos = |c: &str| order.iter().position(|x| *x == c);
        let ok = status.contains("200")
            && ["cross_walk", "road"].iter().all(|lo| {
                ["automobile", "central_reservation"]
                    .iter()
                    .all(|hi| matches!((pos(lo), pos(hi)), (Some(a), Some(b)) if a < b))
            });
        pass &= ok;
        if theta == "0.2" || !ok {
            let first: Vec<&str> = order.iter().take(4).copied().collect();
            notes.push(format!("theta={theta} order starts {first:?}"));
        }
    }

    let gets = [
        "/api/concepts",
        "/api/gallery",
        "/api/margins",
        "/api/margins?theta=0",
        "/api/margins?theta=0.2",
        "/api/margins?theta=0.4",
        "/api/margins?theta=0.6",
        "/api/stats/wilcoxon?threshold=0",
        "/api/stats/wilcoxon?threshold=3",
        "/api/stats/confirmations",
        "/gallery/street_scene.svg",
    ];
    let mut stable = 0;
    for path in gets {
        let a = http(port, "GET", path, "").unwrap();
        let b = http(port, "GET", path, "").unwrap();
        let etag = |h: &str| h.lines().find(|l| l.starts_with("etag:")).map(str::to_owned);
        if a.0.contains("200") && a.2 == b.2 && (path.starts_with("/gallery") || (etag(&a.1).is_some() && etag(&a.1) == etag(&b.1))) {
            stable += 1;
        } else {
            pass = false;
            notes.push(format!("{path} not stable ({})", a.0));
        }
    }
    notes.push(format!("{stable}/{} GET endpoints byte-stable", gets.len()));
    outcome(pass, notes.join("; "))
}

fn main() {
    type Criterion = (u8, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (1, "Wilcoxon exact, theta=0", criterion_1),
        (2, "Wilcoxon exact, theta=0.2", criterion_2),
        (3, "Wilcoxon, theta=0.4 and theta=0.6", criterion_3),
        (4, "MWU exact vs permutation oracle", criterion_4),
        (5, "Wilcoxon exact vs sign-flip oracle", criterion_5),
        (6, "margin engine vs brute-force oracle", criterion_6),
        (7, "property suite", criterion_7),
        (8, "table format fidelity", criterion_8),
        (9, "service contract", criterion_9),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.pass);
        let _ = writeln!(
            out,
            "criterion {id} ({name}): {} [{:.2?}] {}",
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed(),
            result.detail
        );
    }
    let _ = writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed);
    drop(out);
    if failed > 0 {
        std::process::exit(1);
    }
}
