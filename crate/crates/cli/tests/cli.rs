use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bspmm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bspmm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn bspmm")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = bspmm(args, dir);
    assert!(
        out.status.success(),
        "bspmm {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str], dir: &Path) -> Value {
    serde_json::from_str(&ok(args, dir)).expect("stdout is JSON")
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&s).expect("valid schema")
}

fn assert_valid(name: &str, v: &Value) {
    let validator = schema(name);
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{v:#}");
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn identity_mtx(n: usize) -> String {
    let mut s = format!("%%MatrixMarket matrix coordinate real general\n{n} {n} {n}\n");
    for i in 1..=n {
        s.push_str(&format!("{i} {i} 1\n"));
    }
    s
}

#[test]
fn convert_reports_identity_structure() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "eye.mtx", &identity_mtx(100));
    let stats = json(&["convert", "eye.mtx", "-o", "eye.bcsr"], d);
    assert_valid("block_stats", &stats);
    // a 16-row block row covers two 8-wide diagonal blocks; the last holds rows 96..99
    assert_eq!(stats["n_e"], 13);
    assert_eq!(stats["blocks_per_row"], serde_json::json!([2, 2, 2, 2, 2, 2, 1]));

    let bytes = std::fs::read(d.join("eye.bcsr")).unwrap();
    let ab = bspmm::read_bcsr::<f32, _>(bytes.as_slice()).unwrap();
    assert_eq!(ab.n_blocks(), 13);
    assert_eq!(bspmm::from_bcsr(&ab), bspmm::CsrMatrix::identity(100));

    let f64_stats = json(&["convert", "eye.mtx", "-o", "eye64.bcsr", "--precision", "f64", "--dims", "8x8"], d);
    assert_eq!(f64_stats["n_e"], 13);
    assert!(bspmm::read_bcsr::<f64, _>(std::fs::read(d.join("eye64.bcsr")).unwrap().as_slice()).is_ok());
}

#[test]
fn convert_empty_and_malformed() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "empty.mtx", "%%MatrixMarket matrix coordinate real general\n5 7 0\n");
    let stats = json(&["convert", "empty.mtx", "-o", "e.bcsr"], d);
    assert_valid("block_stats", &stats);
    assert_eq!(stats["n_e"], 0);

    write(d, "bad.mtx", "%%MatrixMarket matrix coordinate real general\n3 3 2\n1 1 1.0\n");
    let out = bspmm(&["convert", "bad.mtx", "-o", "b.bcsr"], d);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.mtx") && err.contains("line"), "{err}");

    let out = bspmm(&["convert", "missing.mtx", "-o", "m.bcsr"], d);
    assert!(!out.status.success());
    let out = bspmm(&["convert", "empty.mtx", "-o", "x.bcsr", "--dims", "0x8"], d);
    assert!(!out.status.success());
}

#[test]
fn reorder_clustered_band_and_identity() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["gen-clustered", "--k", "2", "--shuffle", "interleave", "-o", "c.mtx"], d);
    let r = json(&["reorder", "c.mtx", "--tau", "0.5", "--perm-out", "p.txt", "-o", "c2.mtx"], d);
    assert_valid("reorder_report", &r);
    assert_eq!(r["ratio"], 2.0);
    assert_eq!(r["after"]["n_e"], 128);
    let perm: Vec<usize> = std::fs::read_to_string(d.join("p.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(perm.len(), 128);
    assert!(perm[..64].iter().all(|r| r % 2 == 0));
    // the rewritten matrix has the reported block count
    let again = json(&["convert", "c2.mtx", "-o", "c2.bcsr"], d);
    assert_eq!(again["n_e"], 128);

    ok(&["gen-band", "--n", "300", "--b", "10", "-o", "band.mtx"], d);
    let r = json(&["reorder", "band.mtx"], d);
    assert_eq!(r["ratio"], 1.0);
    assert_eq!(r["applied"], false);

    // tau = 0 never merges: identity
    ok(&["gen-random", "--rows", "60", "--cols", "80", "--density", "0.1", "--seed", "3", "-o", "r.mtx"], d);
    let r = json(&["reorder", "r.mtx", "--tau", "0", "--keep-best", "off", "--perm-out", "id.txt"], d);
    assert_eq!(r["ratio"], 1.0);
    let id = std::fs::read_to_string(d.join("id.txt")).unwrap();
    let expect: String = (0..60).map(|i| format!("{i}\n")).collect();
    assert_eq!(id, expect);

    let r = json(&["reorder", "r.mtx", "--mode", "rows-cols", "--col-perm-out", "q.txt"], d);
    assert_valid("reorder_report", &r);
    assert_eq!(std::fs::read_to_string(d.join("q.txt")).unwrap().lines().count(), 80);
}

#[test]
fn spmm_identity_verify_and_spmv() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "eye.mtx", &identity_mtx(20));
    let b: String = (0..20).map(|i| format!("{} {} -{i}.25\n", i, 2 * i + 1)).collect();
    write(d, "b.txt", &b);
    let rec = json(&["spmm", "eye.mtx", "--dense", "b.txt", "-o", "c.txt", "--repeats", "2", "--verify"], d);
    assert_valid("bench_record", &rec);
    assert_eq!(rec["n_rhs"], 3);
    assert_eq!(rec["repeats"], 2);
    let c = std::fs::read_to_string(d.join("c.txt")).unwrap();
    let parse = |s: &str| -> Vec<f64> { s.split_whitespace().map(|t| t.parse().unwrap()).collect() };
    assert_eq!(parse(&c), parse(&b));

    ok(&["gen-clustered", "--k", "3", "--density", "0.4", "--jitter", "0.1", "--n-cols", "100", "-o", "a.mtx"], d);
    for extra in [
        &["--n-rhs", "1"][..],
        &["--n-rhs", "17", "--precision", "f64", "--mode", "rows-cols"],
        &["--n-rhs", "5", "--skip-empty", "off", "--workers", "3", "--dims", "8x8"],
    ] {
        let mut args = vec!["spmm", "a.mtx", "--verify", "--repeats", "1", "-o", "out.txt"];
        args.extend_from_slice(extra);
        let rec = json(&args, d);
        assert_valid("bench_record", &rec);
    }
    let c = std::fs::read_to_string(d.join("out.txt")).unwrap();
    assert_eq!(c.lines().count(), 192);
    assert!(c.lines().all(|l| l.split_whitespace().count() == 5));

    let csv = ok(&["spmm", "a.mtx", "--repeats", "1", "--output", "csv"], d);
    assert!(csv.starts_with("matrix,bandwidth,h,w,tau,mode,n_rhs,skip_empty,"));

    write(d, "short.txt", "1 2\n");
    let out = bspmm(&["spmm", "eye.mtx", "--dense", "short.txt"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rows"));
}

#[test]
fn bench_sweep_then_fit() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let csv = ok(
        &["bench", "--band-n", "512", "--bandwidths", "8,16,32,64", "--repeats", "2", "--csv", "s.csv", "--json", "s.json"],
        d,
    );
    assert_eq!(csv, std::fs::read_to_string(d.join("s.csv")).unwrap());
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let headers = r.headers().unwrap().clone();
    for col in ["n_e", "t_total_s", "cv", "label", "skip_empty", "tile_mma_calls", "gflops", "padded_gflops"] {
        assert!(headers.iter().any(|h| h == col), "missing {col}");
    }
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let n_e: Vec<usize> = rows.iter().map(|r| r[col("n_e")].parse().unwrap()).collect();
    // variants alternate on/off and share the structure
    for pair in n_e.chunks(2) {
        assert_eq!(pair[0], pair[1]);
    }
    assert!(n_e.chunks(2).collect::<Vec<_>>().windows(2).all(|w| w[0][0] < w[1][0]));

    let records: Value = serde_json::from_str(&std::fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    for rec in records.as_array().unwrap() {
        assert_valid("bench_record", rec);
    }

    let models = json(&["fit-model", "s.csv"], d);
    assert_valid("perf_model", &models);
    assert_eq!(models.as_array().unwrap().len(), 2);
    let one = json(&["fit-model", "s.csv", "--label", "skip_empty=on,dims=16x8,N=8"], d);
    assert_eq!(one.as_array().unwrap().len(), 1);
    assert_eq!(one[0]["n_points"], 4);

    write(d, "line.csv", "n_e,t_total_s,cv,label\n1,7,0,x\n2,9,0,x\n3,11,0,x\n");
    let m = json(&["fit-model", "line.csv"], d);
    assert_valid("perf_model", &m);
    assert_eq!((m[0]["t_e"].as_f64(), m[0]["t_init"].as_f64(), m[0]["r2"].as_f64()), (Some(2.0), Some(5.0), Some(1.0)));

    write(d, "single.csv", "n_e,t_total_s,cv,label\n10,0.5,0,x\n");
    let out = bspmm(&["fit-model", "single.csv"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("measurements"));
}

#[test]
fn bench_matrix_list() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["gen-clustered", "--k", "2", "-o", "c.mtx"], d);
    let out = json(&["bench", "c.mtx", "--repeats", "1", "--skip-empty", "on", "--tau", "0.5", "--output", "json"], d);
    let recs = out.as_array().unwrap();
    assert_eq!(recs.len(), 1);
    assert_valid("bench_record", &recs[0]);
    assert_eq!(recs[0]["after"]["n_e"], 128);
    assert_eq!(recs[0]["tile_mma_calls"], 128);
}

#[test]
fn generators_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for (a, b) in [("x1.mtx", "x2.mtx")] {
        for args in [
            vec!["gen-random", "--rows", "40", "--cols", "30", "--density", "0.2", "--seed", "9"],
            vec!["gen-band", "--n", "40", "--b", "3", "--seed", "9"],
            vec!["gen-clustered", "--k", "3", "--jitter", "0.2", "--density", "0.3", "--seed", "9"],
        ] {
            let mut first = args.clone();
            first.extend(["-o", a]);
            let mut second = args.clone();
            second.extend(["-o", b]);
            ok(&first, d);
            ok(&second, d);
            assert_eq!(std::fs::read(d.join(a)).unwrap(), std::fs::read(d.join(b)).unwrap(), "{args:?}");
        }
    }
    ok(&["gen-clustered", "--k", "2", "--rows-per-cluster", "5", "-o", "l.mtx", "--labels-out", "l.txt"], d);
    assert_eq!(std::fs::read_to_string(d.join("l.txt")).unwrap().lines().count(), 10);
    let out = bspmm(&["gen-band", "--n", "4", "--b", "4", "-o", "x.mtx"], d);
    assert!(!out.status.success());

    let urls = ok(&["suitesparse-urls"], d);
    assert!(urls.lines().any(|l| l.ends_with("/cop20k_A.tar.gz")));
    assert!(urls.lines().any(|l| l.ends_with("/mip1.tar.gz")));
}
