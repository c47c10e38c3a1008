//! `bspmm`: convert, reorder, multiply and benchmark block-sparse matrices.

mod dense_io;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use bspmm::bench::{time_multiply, BenchRecord};
use bspmm::perf_model::{read_measurements_csv, sweep_label};
use bspmm::reorder::DEFAULT_TAU;
use bspmm::synth::{
    gen_band, gen_clustered, gen_uniform_random, stream_rng, BandSpec, ClusterSpec, PrototypeLayout, Shuffle,
    ValueDist,
};
use bspmm::{
    block_stats, csr_spmm_reference, fit, max_relative_error, read_matrix_market_file, to_bcsr, write_bcsr,
    write_matrix_market_file, BlockDims, CsrMatrix, DenseMatrix, PreparedSpmm, ReadOptions, ReorderConfig,
    ReorderMode, Scalar, SpmmOptions, Workers,
};

#[derive(Parser)]
#[command(name = "bspmm", version, about = "Block-sparse matrix × dense matrix toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Block a Matrix Market file into a BCSR dump and print its block statistics.
    Convert(ConvertArgs),
    /// Cluster rows by block pattern and report block counts before and after.
    Reorder(ReorderArgs),
    /// Multiply a sparse matrix by a dense one.
    Spmm(SpmmArgs),
    /// Time the kernel over a band sweep or a list of matrices.
    Bench(BenchArgs),
    /// Fit `t = t_e·n_e + t_init` to a measurement CSV, one model per label.
    FitModel(FitArgs),
    /// Write an n×n band matrix.
    GenBand(GenBandArgs),
    /// Write rows drawn from k jittered prototypes.
    GenClustered(GenClusteredArgs),
    /// Write a uniformly random sparse matrix.
    GenRandom(GenRandomArgs),
    /// Print download URLs for a few SuiteSparse matrices (no network access).
    SuitesparseUrls,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct InputOpts {
    /// Matrix Market input.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    /// Keep explicitly stored zeros as structural entries.
    #[arg(long)]
    keep_explicit_zeros: bool,
}

#[derive(Args, Clone)]
struct ReorderOpts {
    #[arg(long, default_value_t = BlockDims::default())]
    dims: BlockDims,
    /// Merge threshold on Jaccard distance.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// rows, rows-cols, or none.
    #[arg(long, default_value_t = ReorderMode::Rows)]
    mode: ReorderMode,
    /// Discard a permutation that does not reduce the block count.
    #[arg(long, value_enum, default_value = "on")]
    keep_best: Switch,
}

impl ReorderOpts {
    fn config(&self) -> ReorderConfig {
        ReorderConfig {
            tau: self.tau,
            mode: self.mode,
            keep_best: self.keep_best.on(),
        }
    }
}

#[derive(Args, Clone)]
struct ExecOpts {
    #[arg(long, value_enum, default_value = "on")]
    skip_empty: Switch,
    /// Worker threads, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_workers)]
    workers: Workers,
    /// Width of the column panels of B.
    #[arg(long, default_value_t = bspmm::spmm::DEFAULT_TILE_N)]
    tile_n: usize,
    #[arg(long, default_value_t = bspmm::bench::DEFAULT_REPEATS)]
    repeats: usize,
}

impl ExecOpts {
    fn spmm_options(&self, dims: BlockDims, skip_empty: bool) -> Result<SpmmOptions> {
        let mut opts = SpmmOptions::for_dims(dims);
        opts.tile.n = self.tile_n;
        if self.tile_n == 0 {
            bail!("--tile-n must be positive");
        }
        opts.workers = self.workers;
        opts.skip_empty = skip_empty;
        Ok(opts)
    }
}

fn parse_workers(s: &str) -> Result<Workers, String> {
    if s == "auto" {
        return Ok(Workers::Auto);
    }
    let n: usize = s.parse().map_err(|_| format!("expected a count or `auto`, got {s:?}"))?;
    Workers::fixed(n).map_err(|e| e.to_string())
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    input: InputOpts,
    #[arg(long, default_value_t = BlockDims::default())]
    dims: BlockDims,
    /// BCSR dump to write.
    #[arg(short = 'o', long = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct ReorderArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    reorder: ReorderOpts,
    /// Write the row permutation, one source row index per line.
    #[arg(long)]
    perm_out: Option<PathBuf>,
    /// Write the column permutation (rows-cols mode).
    #[arg(long)]
    col_perm_out: Option<PathBuf>,
    /// Write the reordered matrix as Matrix Market.
    #[arg(short = 'o', long = "out")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SpmmArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    reorder: ReorderOpts,
    #[command(flatten)]
    exec: ExecOpts,
    /// Dense right-hand side as text rows; generated when absent.
    #[arg(long)]
    dense: Option<PathBuf>,
    /// Columns of the generated right-hand side.
    #[arg(long, default_value_t = 8)]
    n_rhs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check the product against the CSR reference and fail on mismatch.
    #[arg(long)]
    verify: bool,
    /// Write the product as text rows.
    #[arg(short = 'o', long = "out")]
    output: Option<PathBuf>,
    /// Write the row permutation that was applied.
    #[arg(long)]
    perm_out: Option<PathBuf>,
    /// Format of the benchmark record on stdout.
    #[arg(long = "output", value_enum, default_value = "json")]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variants {
    On,
    Off,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    /// Matrix Market files to time (instead of a band sweep).
    matrices: Vec<PathBuf>,
    /// Order of the band matrices in a sweep.
    #[arg(long, default_value_t = 4096)]
    band_n: usize,
    /// Half-bandwidths of the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64, 128, 256, 512])]
    bandwidths: Vec<usize>,
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    #[command(flatten)]
    reorder: ReorderOpts,
    /// Which kernel variants to time.
    #[arg(long, value_enum, default_value = "both")]
    skip_empty: Variants,
    #[arg(long, default_value = "auto", value_parser = parse_workers)]
    workers: Workers,
    #[arg(long, default_value_t = bspmm::spmm::DEFAULT_TILE_N)]
    tile_n: usize,
    #[arg(long, default_value_t = bspmm::bench::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = 8)]
    n_rhs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Format printed on stdout.
    #[arg(long, value_enum, default_value = "csv")]
    output: OutputFormat,
    /// Also write the rows as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the full records as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with at least the columns n_e, t_total_s and label.
    input: PathBuf,
    /// Fit only rows with this label.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Values {
    Ones,
    Uniform,
}

impl From<Values> for ValueDist {
    fn from(v: Values) -> Self {
        match v {
            Values::Ones => ValueDist::Ones,
            Values::Uniform => ValueDist::Uniform,
        }
    }
}

#[derive(Args)]
struct GenBandArgs {
    #[arg(long)]
    n: usize,
    /// Half-bandwidth.
    #[arg(long)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    values: Values,
    #[arg(short = 'o', long = "out")]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Disjoint,
    Overlapping,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowOrder {
    Random,
    Interleave,
}

#[derive(Args)]
struct GenClusteredArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 64)]
    rows_per_cluster: usize,
    #[arg(long, default_value_t = 256)]
    n_cols: usize,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Probability that a row moves one prototype entry to a random column.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, value_enum, default_value = "disjoint")]
    layout: Layout,
    #[arg(long, value_enum, default_value = "random")]
    shuffle: RowOrder,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    values: Values,
    #[arg(short = 'o', long = "out")]
    output: PathBuf,
    /// Write the prototype label of each row, one per line.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenRandomArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long = "out")]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe (`bspmm ... | head`) is not an error
        Err(e) if e.chain().any(|c| {
            c.downcast_ref::<io::Error>().map(io::Error::kind)
                .or_else(|| c.downcast_ref::<serde_json::Error>().and_then(serde_json::Error::io_error_kind))
                == Some(io::ErrorKind::BrokenPipe)
        }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Convert(a) => match a.input.precision {
            Precision::F32 => convert::<f32>(&a),
            Precision::F64 => convert::<f64>(&a),
        },
        Command::Reorder(a) => match a.input.precision {
            Precision::F32 => reorder_cmd::<f32>(&a),
            Precision::F64 => reorder_cmd::<f64>(&a),
        },
        Command::Spmm(a) => match a.input.precision {
            Precision::F32 => spmm_cmd::<f32>(&a),
            Precision::F64 => spmm_cmd::<f64>(&a),
        },
        Command::Bench(a) => match a.precision {
            Precision::F32 => bench_cmd::<f32>(&a),
            Precision::F64 => bench_cmd::<f64>(&a),
        },
        Command::FitModel(a) => fit_cmd(&a),
        Command::GenBand(a) => {
            let m: CsrMatrix<f64> = gen_band(&BandSpec {
                n: a.n,
                b: a.b,
                seed: a.seed,
                value_dist: a.values.into(),
            })?;
            write_mtx(&m, &a.output)
        }
        Command::GenClustered(a) => gen_clustered_cmd(&a),
        Command::GenRandom(a) => {
            let m: CsrMatrix<f64> = gen_uniform_random(a.rows, a.cols, a.density, a.seed)?;
            write_mtx(&m, &a.output)
        }
        Command::SuitesparseUrls => {
            let mut out = io::stdout().lock();
            for (group, name) in SUITESPARSE {
                writeln!(out, "https://sparse.tamu.edu/MM/{group}/{name}.tar.gz")?;
            }
            Ok(())
        }
    }
}

const SUITESPARSE: [(&str, &str); 8] = [
    ("Williams", "cop20k_A"),
    ("Andreas", "mip1"),
    ("IBM_EDA", "dc2"),
    ("Williams", "cant"),
    ("Williams", "consph"),
    ("Williams", "pdb1HYS"),
    ("Bova", "rma10"),
    ("DNVS", "shipsec1"),
];

fn load<T: Scalar>(opts: &InputOpts) -> Result<CsrMatrix<T>> {
    load_path(&opts.input, opts.keep_explicit_zeros)
}

fn load_path<T: Scalar>(path: &Path, keep_explicit_zeros: bool) -> Result<CsrMatrix<T>> {
    read_matrix_market_file(path, ReadOptions { keep_explicit_zeros })
        .with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_mtx<T: Scalar>(m: &CsrMatrix<T>, path: &Path) -> Result<()> {
    write_matrix_market_file(m, path).with_context(|| format!("writing {}", path.display()))
}

fn print_json<S: Serialize>(value: &S) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn convert<T: Scalar>(a: &ConvertArgs) -> Result<()> {
    let m = load::<T>(&a.input)?;
    let ab = to_bcsr(&m, a.dims);
    let mut out = create(&a.output)?;
    write_bcsr(&ab, &mut out)?;
    out.flush()?;
    print_json(&block_stats(&ab, m.nnz()))
}

fn reorder_cmd<T: Scalar>(a: &ReorderArgs) -> Result<()> {
    let m = load::<T>(&a.input)?;
    let r = bspmm::reorder(&m, a.reorder.dims, &a.reorder.config())?;
    if let Some(p) = &a.perm_out {
        write_text(p, &r.row_perm.to_text())?;
    }
    if let Some(p) = &a.col_perm_out {
        match &r.col_perm {
            Some(q) => write_text(p, &q.to_text())?,
            None => write_text(p, &bspmm::Permutation::identity(m.n_cols()).to_text())?,
        }
    }
    if let Some(p) = &a.output {
        write_mtx(&r.matrix, p)?;
    }
    print_json(&r.report)
}

fn spmm_cmd<T: Scalar>(a: &SpmmArgs) -> Result<()> {
    let m = load::<T>(&a.input)?;
    let b: DenseMatrix<T> = match &a.dense {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            dense_io::read_dense(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?
        }
        None => random_dense(m.n_cols(), a.n_rhs, a.seed)?,
    };
    if b.n_rows() != m.n_cols() {
        bail!(
            "dense operand has {} rows but the sparse matrix has {} columns",
            b.n_rows(),
            m.n_cols()
        );
    }
    let dims = a.reorder.dims;
    let cfg = a.reorder.config();
    let opts = a.exec.spmm_options(dims, a.exec.skip_empty.on())?;
    let prepared = PreparedSpmm::new(&m, dims, &cfg)?;
    let (c, timing) = time_multiply(&prepared, &b, &opts, a.exec.repeats)?;

    if a.verify {
        let oracle = csr_spmm_reference(&m, &b)?;
        let err = max_relative_error(&c, &oracle);
        if err.is_nan() || err > T::ORACLE_RTOL {
            bail!("verification failed: max relative error {err:e} exceeds {:e}", T::ORACLE_RTOL);
        }
        eprintln!("verified: max relative error {err:e}");
    }
    if let Some(p) = &a.output {
        dense_io::write_dense(&c, create(p)?)?;
    }
    if let Some(p) = &a.perm_out {
        write_text(p, &prepared.row_perm().to_text())?;
    }

    let r = prepared.report().clone();
    let name = a.input.input.display().to_string();
    let rec = BenchRecord::new(name, r.tau, r.mode, b.n_cols(), &opts, r.before, r.after, &timing);
    match a.format {
        OutputFormat::Json => print_json(&rec),
        OutputFormat::Csv => {
            let row = BenchRow::from_record(&rec, None, sweep_label(&opts, b.n_cols()));
            write_rows_csv(&[row], io::stdout().lock())
        },
    }
}

fn random_dense<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix<T>> {
    use rand::Rng;
    let mut rng = stream_rng(seed, 7);
    let data = (0..rows * cols)
        .map(|_| T::from_f64_lossy(rng.gen_range(-1.0..1.0)))
        .collect();
    Ok(DenseMatrix::new(rows, cols, data)?)
}

/// One flat CSV row per timed kernel run. `n_e`, `t_total_s`, `cv` and `label`
/// are the columns `fit-model` reads.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchRow {
    matrix: String,
    bandwidth: Option<usize>,
    h: usize,
    w: usize,
    tau: f64,
    mode: ReorderMode,
    n_rhs: usize,
    skip_empty: bool,
    workers: usize,
    nnz: usize,
    n_e_before: usize,
    n_e: usize,
    grid_blocks: usize,
    t_total_s: f64,
    cv: f64,
    repeats: usize,
    tile_mma_calls: u64,
    blocks_touched: u64,
    gflops: f64,
    padded_gflops: f64,
    label: String,
}

impl BenchRow {
    fn from_record(r: &BenchRecord, bandwidth: Option<usize>, label: String) -> Self {
        Self {
            matrix: r.matrix.clone(),
            bandwidth,
            h: r.h,
            w: r.w,
            tau: r.tau,
            mode: r.mode,
            n_rhs: r.n_rhs,
            skip_empty: r.skip_empty,
            workers: r.workers,
            nnz: r.after.nnz,
            n_e_before: r.before.n_e,
            n_e: r.after.n_e,
            grid_blocks: r.after.n_block_rows * r.after.n_block_cols,
            t_total_s: r.mean_s,
            cv: r.cv,
            repeats: r.repeats,
            tile_mma_calls: r.tile_mma_calls,
            blocks_touched: r.blocks_touched,
            gflops: r.gflops,
            padded_gflops: r.padded_gflops,
            label,
        }
    }
}

fn write_rows_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn bench_cmd<T: Scalar>(a: &BenchArgs) -> Result<()> {
    let dims = a.reorder.dims;
    let variants: &[bool] = match a.skip_empty {
        Variants::On => &[true],
        Variants::Off => &[false],
        Variants::Both => &[true, false],
    };
    let exec = ExecOpts {
        skip_empty: Switch::On,
        workers: a.workers,
        tile_n: a.tile_n,
        repeats: a.repeats,
    };

    // (name, bandwidth, matrix, reorder config)
    let mut inputs: Vec<(String, Option<usize>, CsrMatrix<T>, ReorderConfig)> = Vec::new();
    if a.matrices.is_empty() {
        for &bw in &a.bandwidths {
            let m = gen_band(&BandSpec {
                n: a.band_n,
                b: bw,
                seed: a.seed,
                value_dist: ValueDist::Uniform,
            })?;
            // band matrices are already in their best order
            let cfg = ReorderConfig { mode: ReorderMode::None, ..a.reorder.config() };
            inputs.push((format!("band_n{}_b{bw}", a.band_n), Some(bw), m, cfg));
        }
    } else {
        for p in &a.matrices {
            inputs.push((p.display().to_string(), None, load_path(p, false)?, a.reorder.config()));
        }
    }

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (name, bw, m, cfg) in &inputs {
        let prepared = PreparedSpmm::new(m, dims, cfg)?;
        let b = random_dense::<T>(m.n_cols(), a.n_rhs, a.seed)?;
        for &skip in variants {
            let opts = exec.spmm_options(dims, skip)?;
            let (_, timing) = time_multiply(&prepared, &b, &opts, a.repeats)?;
            let r = prepared.report();
            let rec = BenchRecord::new(
                name.clone(),
                r.tau,
                r.mode,
                a.n_rhs,
                &opts,
                r.before.clone(),
                r.after.clone(),
                &timing,
            );
            rows.push(BenchRow::from_record(&rec, *bw, sweep_label(&opts, a.n_rhs)));
            records.push(rec);
        }
    }

    if let Some(p) = &a.csv {
        write_rows_csv(&rows, create(p)?)?;
    }
    if let Some(p) = &a.json {
        let mut out = create(p)?;
        serde_json::to_writer_pretty(&mut out, &records)?;
        writeln!(out)?;
        out.flush()?;
    }
    match a.output {
        OutputFormat::Csv => write_rows_csv(&rows, io::stdout().lock()),
        OutputFormat::Json => print_json(&records),
    }
}

#[derive(Serialize)]
struct LabeledModel {
    label: String,
    #[serde(flatten)]
    model: bspmm::PerfModel,
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let f = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let ms = read_measurements_csv(BufReader::new(f)).with_context(|| format!("reading {}", a.input.display()))?;
    let mut labels: Vec<&str> = Vec::new();
    for m in &ms {
        if !labels.contains(&m.label.as_str()) {
            labels.push(&m.label);
        }
    }
    if let Some(l) = &a.label {
        if !labels.contains(&l.as_str()) {
            bail!("no measurements with label {l:?}");
        }
        labels = vec![l];
    }
    if labels.is_empty() {
        bail!("no measurements in {}", a.input.display());
    }
    let mut models = Vec::new();
    for label in labels {
        let group: Vec<_> = ms.iter().filter(|m| m.label == label).cloned().collect();
        let model = fit(&group).with_context(|| format!("fitting label {label:?}"))?;
        if model.degenerate {
            eprintln!("warning: negative slope for {label:?} clamped to zero");
        }
        models.push(LabeledModel { label: label.to_string(), model });
    }
    print_json(&models)
}

fn gen_clustered_cmd(a: &GenClusteredArgs) -> Result<()> {
    let (m, labels) = gen_clustered::<f64>(&ClusterSpec {
        k: a.k,
        rows_per_cluster: a.rows_per_cluster,
        n_cols: a.n_cols,
        density: a.density,
        jitter: a.jitter,
        layout: match a.layout {
            Layout::Disjoint => PrototypeLayout::Disjoint,
            Layout::Overlapping => PrototypeLayout::Overlapping,
        },
        shuffle: match a.shuffle {
            RowOrder::Random => Shuffle::Random,
            RowOrder::Interleave => Shuffle::Interleave,
        },
        seed: a.seed,
        value_dist: a.values.into(),
    })?;
    write_mtx(&m, &a.output)?;
    if let Some(p) = &a.labels_out {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        write_text(p, &text)?;
    }
    Ok(())
}
