//! The command surface: traversal dumps, invariance checks, eigensolver
//! validation and the scaling benchmark.
//!
//! Every command returns a [`RunReport`]; the binary prints it and maps the
//! outcome to an exit status with [`exit_code`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{MergeMode, ModelConfig};
use crate::eigensolver::{dense_eig_oracle, lanczos_smallest, EigConfig, SpectralBasis, DEGENERACY_GAP};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::flops::{self, Stage};
use crate::patch_embed::{rfn_aggregate, FeatureMap};
use crate::spectral_graph::SparseSymMatrix;
use crate::ssm::{network_forward, spectral_traversal, stem_features, ModelWeights, SpectralTraversal, ZohMode};
use crate::tensor_io::{read_ppm, rotate_quarter, synth_noise, synth_two_cluster, write_ppm, ImageTensor, QuarterTurn};
use crate::traversal::{apply_scan, boundary_crossings, TraversalPlan};
use crate::rng::XorShift64Star;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Outcome of one command as ordered `key=value` lines.
///
/// Keys starting with `time.` hold wall-clock measurements and are the only
/// lines allowed to differ between runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub metrics: Vec<(String, String)>,
    pub checks: Vec<(String, bool)>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self { command: command.to_string(), ..Self::default() }
    }

    fn echo_config(&mut self, cfg: &ModelConfig) {
        for line in cfg.to_text().lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.config.push((k.to_string(), v.to_string()));
            }
        }
    }

    pub fn metric(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.metrics.push((key.into(), value.to_string()));
    }

    /// Records a check; repeating a name combines the outcomes.
    pub fn check(&mut self, name: &str, pass: bool) {
        match self.checks.iter_mut().find(|(n, _)| n == name) {
            Some((_, p)) => *p &= pass,
            None => self.checks.push((name.to_string(), pass)),
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn check_passed(&self, name: &str) -> Option<bool> {
        self.checks.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, p)| *p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}={v}");
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k}={v}");
        }
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(s, "warning.{i}={w}");
        }
        for (i, a) in self.artifacts.iter().enumerate() {
            let _ = writeln!(s, "artifact.{i}={}", a.display());
        }
        for (name, pass) in &self.checks {
            let _ = writeln!(s, "check.{name}={}", if *pass { "pass" } else { "fail" });
        }
        let _ = writeln!(s, "result={}", if self.passed() { "pass" } else { "fail" });
        s
    }

    /// [`RunReport::to_text`] without the `time.` lines.
    pub fn deterministic_text(&self) -> String {
        self.to_text().lines().filter(|l| !l.starts_with("time.")).map(|l| format!("{l}\n")).collect()
    }
}

/// 0 when every check passed, 1 on a failed check, 2 for usage and I/O
/// problems, 3 for numeric and convergence failures.
pub fn exit_code(outcome: &Result<RunReport>) -> i32 {
    match outcome {
        Ok(r) if r.passed() => EXIT_PASS,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => match e.root() {
            Error::Numeric { .. }
            | Error::Convergence { .. }
            | Error::DegenerateVector { .. }
            | Error::IsolatedNode { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        },
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub merge: Option<MergeMode>,
    pub zoh: Option<ZohMode>,
    pub parallel: bool,
}

pub fn load_config(path: Option<&Path>, o: &Overrides) -> Result<ModelConfig> {
    let mut cfg = match path {
        Some(p) => ModelConfig::parse(&std::fs::read_to_string(p)?)?,
        None => ModelConfig::default(),
    };
    if let Some(m) = o.m {
        cfg.m = m;
    }
    if let Some(k) = o.k {
        cfg.k = k;
    }
    if let Some(merge) = o.merge {
        cfg.merge_mode = merge;
    }
    if let Some(zoh) = o.zoh {
        cfg.zoh_mode = zoh;
    }
    cfg.parallel |= o.parallel;
    cfg.validate()?;
    Ok(cfg)
}

/// Inputs shared by the image commands.
#[derive(Debug, Clone)]
pub struct ImageInputs {
    pub config: ModelConfig,
    /// PPM input; when absent a seeded fixture of `image_size` is synthesized.
    pub image: Option<PathBuf>,
    /// SVW1 weights; when absent the seeded generator with `weights_seed`.
    pub weights: Option<PathBuf>,
    pub seed: u64,
}

impl ImageInputs {
    pub fn new(config: ModelConfig) -> Self {
        Self { config, image: None, weights: None, seed: 0 }
    }

    fn weights(&self) -> Result<ModelWeights> {
        match &self.weights {
            Some(p) => ModelWeights::load(&self.config, &std::fs::read(p)?),
            None => ModelWeights::seeded(&self.config, self.config.weights_seed),
        }
    }

    fn image(&self, fallback: impl FnOnce(&ModelConfig, u64) -> Result<ImageTensor>) -> Result<ImageTensor> {
        match &self.image {
            Some(p) => read_ppm(&std::fs::read(p)?).map_err(|e| e.in_stage("image")),
            None => fallback(&self.config, self.seed),
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn record_spectrum(report: &mut RunReport, st: &SpectralTraversal) {
    report.metric("graph.n", st.plan.n);
    report.metric("graph.sigma", st.graph.sigma);
    report.metric("graph.adjacency_nnz", st.graph.adjacency.nnz());
    for (j, v) in st.basis.values().iter().enumerate() {
        report.metric(format!("eig.lambda.{j}"), v);
    }
    report.metric("eig.iterations", st.eig.iterations);
    report.metric("eig.probes", st.eig.probes);
    report.metric("eig.max_residual", st.eig.residuals.iter().fold(0.0f64, |a, &b| a.max(b)));
}

fn rank_image(plan: &TraversalPlan, t: usize, scale: usize) -> ImageTensor {
    let (hp, wp) = plan.source_shape;
    let n = plan.n as f32;
    let inv = &plan.inverses[t];
    ImageTensor::from_fn(hp * scale, wp * scale, 3, |i, j, _| inv[(i / scale) * wp + j / scale] as f32 / n)
        .expect("ranks lie in [0, 1)")
}

/// Writes the plan dump (`<out>.plan.txt`) and one rank map per order
/// (`<out>.order<t>_<asc|desc>.ppm`).
pub fn cmd_traverse(inputs: &ImageInputs, out: &Path) -> Result<RunReport> {
    let cfg = &inputs.config;
    let mut report = RunReport::new("traverse");
    report.echo_config(cfg);
    let img = inputs.image(|c, seed| synth_two_cluster(c.grid(), c.grid(), c.patch, 0.5, seed))?;
    let w = inputs.weights()?;
    let started = Instant::now();
    let f = stem_features(&img, &w, cfg)?;
    let st = spectral_traversal(&f, cfg)?;
    let elapsed = started.elapsed();
    record_spectrum(&mut report, &st);
    report.metric("time.traversal_ms", elapsed.as_secs_f64() * 1e3);
    for (i, j) in st.basis.degenerate_pairs(DEGENERACY_GAP) {
        report.warn(format!("eigenvalues {i} and {j} coincide; their orders depend on the chosen eigenbasis"));
    }

    let plan_path = with_suffix(out, ".plan.txt");
    std::fs::write(&plan_path, st.plan.dump())?;
    report.artifacts.push(plan_path);
    for t in 0..st.plan.len() {
        let path = with_suffix(out, &format!(".order{t}_{}.ppm", TraversalPlan::direction(t)));
        std::fs::write(&path, write_ppm(&rank_image(&st.plan, t, cfg.patch))?)?;
        report.artifacts.push(path);
    }
    let bijective = (0..st.plan.len()).all(|t| (0..st.plan.n).all(|i| st.plan.inverses[t][st.plan.orders[t][i]] == i));
    report.check("plan_bijective", bijective);
    Ok(report)
}

/// Groups of mutually degenerate eigenvector indices.
fn degenerate_groups(basis: &SpectralBasis) -> Vec<Vec<usize>> {
    let mut group: Vec<usize> = (0..basis.m()).collect();
    for (i, j) in basis.degenerate_pairs(DEGENERACY_GAP) {
        let (g, h) = (group[i], group[j]);
        for x in group.iter_mut().filter(|x| **x == h) {
            *x = g;
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    for j in 0..basis.m() {
        match out.iter_mut().find(|g| group[g[0]] == group[j]) {
            Some(g) => g.push(j),
            None => out.push(vec![j]),
        }
    }
    out
}

struct Comparison {
    /// Every order of a nondegenerate eigenvector visits identical contents.
    content_equal: bool,
    spectrum_gap: f64,
    /// Largest projector difference over degenerate eigenspaces.
    subspace_gap: f64,
}

/// Compares `other` against `base`, where node `r` of `other` is node
/// `perm[r]` of `base`.
fn compare(
    base: (&FeatureMap, &SpectralTraversal),
    other: (&FeatureMap, &SpectralTraversal),
    perm: &[usize],
) -> Comparison {
    let (bf, bt) = base;
    let (of, ot) = other;
    let spectrum_gap = bt.basis.values().iter().zip(ot.basis.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut content_equal = true;
    let mut subspace_gap: f64 = 0.0;
    let base_seqs = apply_scan(bf, &bt.plan).expect("plan matches its features");
    let other_seqs = apply_scan(of, &ot.plan).expect("plan matches its features");
    for group in degenerate_groups(&bt.basis) {
        if group.len() == 1 {
            let j = group[0];
            content_equal &= base_seqs[2 * j] == other_seqs[2 * j] && base_seqs[2 * j + 1] == other_seqs[2 * j + 1];
            continue;
        }
        let n = perm.len();
        for r in 0..n {
            for s in 0..n {
                let p_other: f64 = group.iter().map(|&k| ot.basis.vector(k)[r] * ot.basis.vector(k)[s]).sum();
                let p_base: f64 =
                    group.iter().map(|&k| bt.basis.vector(k)[perm[r]] * bt.basis.vector(k)[perm[s]]).sum();
                subspace_gap = subspace_gap.max((p_other - p_base).abs());
            }
        }
    }
    Comparison { content_equal, spectrum_gap, subspace_gap }
}

/// Node correspondence of a rotated grid: node `r` of the rotated map is node
/// `perm[r]` of the original.
fn rotation_perm(hp: usize, wp: usize, q: QuarterTurn) -> Vec<usize> {
    let (oh, ow) = q.output_shape(hp, wp);
    (0..oh * ow)
        .map(|r| {
            let (i, j) = q.source(hp, wp, r / ow, r % ow);
            i * wp + j
        })
        .collect()
}

pub const RELABELINGS: usize = 32;

/// Checks (a) RFN equivariance, (b) rotation invariance of content order,
/// (c) rotation invariance of network scores and (d) invariance under
/// random node relabelings.
pub fn cmd_check_invariance(inputs: &ImageInputs) -> Result<RunReport> {
    let cfg = &inputs.config;
    let mut report = RunReport::new("check-invariance");
    report.echo_config(cfg);
    let img = inputs.image(|c, seed| synth_noise(c.image_size, c.image_size, c.in_channels, seed))?;
    if !img.is_square() {
        return Err(Error::arg(format!("invariance checks need a square image, got {}x{}", img.height(), img.width())));
    }
    let w = inputs.weights()?;
    let started = Instant::now();
    let f = stem_features(&img, &w, cfg)?;
    let st = spectral_traversal(&f, cfg)?;
    record_spectrum(&mut report, &st);
    let degenerate = st.basis.degenerate_pairs(DEGENERACY_GAP);
    if !degenerate.is_empty() {
        report.warn(format!(
            "degenerate eigenvalues {degenerate:?}: their traversals are compared at the subspace level and network scores are not compared"
        ));
    }
    let scores = if degenerate.is_empty() { Some(network_forward(&img, &w, cfg)?) } else { None };

    let (hp, wp) = f.shape();
    let mut max_spectrum_gap: f64 = 0.0;
    let mut max_subspace_gap: f64 = 0.0;
    let mut max_score_gap: f64 = 0.0;
    for q in (1..4).map(QuarterTurn::new) {
        let rotated = rotate_quarter(&img, q);
        let fq = rfn_aggregate(&rotated, &w.stem, &cfg.rfn_turns, cfg.parallel)?;
        report.check("rfn_equivariance", fq == f.rotate(q));
        let stq = spectral_traversal(&fq, cfg)?;
        let cmp = compare((&f, &st), (&fq, &stq), &rotation_perm(hp, wp, q));
        report.check("content_order_rotation", cmp.content_equal);
        max_spectrum_gap = max_spectrum_gap.max(cmp.spectrum_gap);
        max_subspace_gap = max_subspace_gap.max(cmp.subspace_gap);
        if let Some(base) = &scores {
            let sq = network_forward(&rotated, &w, cfg)?;
            let gap = base.iter().zip(&sq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            max_score_gap = max_score_gap.max(gap);
        }
    }
    report.metric("rotation.max_spectrum_gap", max_spectrum_gap);
    if scores.is_some() {
        report.metric("rotation.max_score_gap", max_score_gap);
        report.check("scores_rotation", max_score_gap <= 1e-6);
    }

    let mut rng = XorShift64Star::new(inputs.seed ^ 0x5EED);
    let n = f.tokens();
    let mut perm_spectrum_gap: f64 = 0.0;
    for _ in 0..RELABELINGS {
        let perm = rng.permutation(n);
        let data = perm.iter().flat_map(|&p| f.token(p).iter().copied()).collect();
        let fp = FeatureMap::new(hp, wp, f.channels(), data)?;
        let stp = spectral_traversal(&fp, cfg)?;
        let cmp = compare((&f, &st), (&fp, &stp), &perm);
        report.check("content_order_permutation", cmp.content_equal);
        perm_spectrum_gap = perm_spectrum_gap.max(cmp.spectrum_gap);
        max_subspace_gap = max_subspace_gap.max(cmp.subspace_gap);
    }
    report.metric("permutation.relabelings", RELABELINGS);
    report.metric("permutation.max_spectrum_gap", perm_spectrum_gap);
    report.check("spectrum_permutation", perm_spectrum_gap <= 1e-10 && max_spectrum_gap <= 1e-10);
    if !degenerate.is_empty() {
        report.metric("degenerate.max_subspace_gap", max_subspace_gap);
        report.check("degenerate_subspaces", max_subspace_gap <= 1e-6);
    }
    report.metric("time.total_ms", started.elapsed().as_secs_f64() * 1e3);
    Ok(report)
}

/// Matrix handed to [`cmd_eig`].
#[derive(Debug, Clone)]
pub enum MatrixSource {
    /// Text triplets `i j value`, see [`SparseSymMatrix::from_triplet_text`].
    File(PathBuf),
    /// A name understood by [`fixtures::by_name`].
    Fixture(String),
}

/// Dense problems above this size skip the Jacobi comparison.
pub const ORACLE_LIMIT: usize = 1500;

/// Lanczos (forced, regardless of size) against the dense oracle.
pub fn cmd_eig(source: &MatrixSource, m: usize) -> Result<RunReport> {
    let mut report = RunReport::new("eig");
    let l = match source {
        MatrixSource::File(p) => SparseSymMatrix::from_triplet_text(&std::fs::read_to_string(p)?)?,
        MatrixSource::Fixture(name) => fixtures::by_name(name)?,
    };
    report.config.push(("m".into(), m.to_string()));
    report.config.push((
        "source".into(),
        match source {
            MatrixSource::File(p) => p.display().to_string(),
            MatrixSource::Fixture(n) => format!("fixture:{n}"),
        },
    ));
    let n = l.n();
    report.metric("n", n);
    report.metric("nnz", l.nnz());
    let cfg = EigConfig { dense_threshold: 0, ..EigConfig::with_m(m) };
    let _scope = flops::Scope::start();
    let started = Instant::now();
    let (basis, eig) = lanczos_smallest(&l, &cfg)?;
    report.metric("time.lanczos_ms", started.elapsed().as_secs_f64() * 1e3);
    report.metric("iterations", eig.iterations);
    report.metric("restarts", eig.restarts);
    report.metric("probes", eig.probes);
    report.metric("flops", flops::count(Stage::Eigensolver));

    let mut max_gap: f64 = 0.0;
    let oracle = if n <= ORACLE_LIMIT { Some(dense_eig_oracle(&l.to_dense(), n)?) } else { None };
    for j in 0..basis.m() {
        report.metric(format!("lambda.{j}"), basis.values()[j]);
        report.metric(format!("residual.{j}"), eig.residuals[j]);
        if let Some(o) = &oracle {
            let gap = (basis.values()[j] - o.values[j]).abs();
            report.metric(format!("oracle.{j}"), o.values[j]);
            report.metric(format!("gap.{j}"), gap);
            max_gap = max_gap.max(gap);
        }
    }
    let mut orth: f64 = 0.0;
    for a in 0..basis.m() {
        for b in 0..=a {
            let d: f64 = basis.vector(a).iter().zip(basis.vector(b)).map(|(x, y)| x * y).sum();
            orth = orth.max((d - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    report.metric("max_orthogonality_error", orth);
    for group in degenerate_groups(&basis) {
        if group.len() > 1 {
            report.warn(format!(
                "eigenvalue {} has multiplicity {} among the returned pairs {group:?}",
                basis.values()[group[0]],
                group.len()
            ));
        }
    }
    if oracle.is_some() {
        report.metric("max_gap", max_gap);
        report.check("eigenvalues_match_oracle", max_gap <= 1e-8);
    } else {
        report.warn(format!("n={n} exceeds {ORACLE_LIMIT}; dense comparison skipped"));
    }
    report.check("residuals", eig.residuals.iter().all(|&r| r <= 1e-8));
    report.check("orthonormal", orth <= 1e-8);
    Ok(report)
}

pub const BENCH_SIDES: [usize; 4] = [7, 14, 28, 56];

/// One sweep point of [`cmd_bench`].
#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub n: usize,
    pub seconds: f64,
    /// Adjacency + Laplacian + neighbor lists.
    pub sparse_bytes: usize,
    pub adjacency_nnz: usize,
    pub flops: Vec<(Stage, u64)>,
}

impl BenchPoint {
    pub fn traversal_flops(&self) -> u64 {
        self.flops.iter().filter(|(s, _)| Stage::TRAVERSAL.contains(s)).map(|(_, c)| c).sum()
    }
}

/// Builds the traversal for a seeded `side x side` token grid and measures it.
pub fn bench_point(cfg: &ModelConfig, w: &ModelWeights, side: usize, seed: u64) -> Result<BenchPoint> {
    let img = synth_noise(side * cfg.patch, side * cfg.patch, cfg.in_channels, seed)?;
    let f = stem_features(&img, w, cfg)?;
    let _scope = flops::Scope::start();
    let started = Instant::now();
    let st = spectral_traversal(&f, cfg)?;
    let seconds = started.elapsed().as_secs_f64();
    let neighbor_bytes: usize = st.graph.neighbors.iter().map(|v| v.len() * std::mem::size_of::<usize>()).sum();
    Ok(BenchPoint {
        n: st.plan.n,
        seconds,
        sparse_bytes: st.graph.adjacency.heap_bytes() + st.graph.laplacian.heap_bytes() + neighbor_bytes,
        adjacency_nnz: st.graph.adjacency.nnz(),
        flops: Stage::TRAVERSAL.iter().map(|&s| (s, flops::count(s))).collect(),
    })
}

/// Sweeps `n` over 49, 196, 784 and 3136 tokens.
pub fn cmd_bench(cfg: &ModelConfig, seed: u64) -> Result<RunReport> {
    let mut report = RunReport::new("bench");
    report.echo_config(cfg);
    let w = ModelWeights::seeded(cfg, cfg.weights_seed)?;
    let mut points = Vec::new();
    for side in BENCH_SIDES {
        let p = bench_point(cfg, &w, side, seed)?;
        let n = p.n;
        report.metric(format!("n{n}.sparse_bytes"), p.sparse_bytes);
        report.metric(format!("n{n}.adjacency_nnz"), p.adjacency_nnz);
        for (s, c) in &p.flops {
            report.metric(format!("n{n}.flops.{}", s.name()), c);
        }
        report.metric(format!("n{n}.flops.traversal"), p.traversal_flops());
        report.metric(format!("time.n{n}.traversal_ms"), p.seconds * 1e3);
        report.check("nnz_within_2kn", p.adjacency_nnz <= 2 * cfg.k * n);
        points.push(p);
    }
    for pair in points.windows(2) {
        let ratio = pair[1].sparse_bytes as f64 / pair[0].sparse_bytes as f64;
        report.metric(format!("memory_ratio.n{}_to_n{}", pair[0].n, pair[1].n), format!("{ratio:.4}"));
        report.check("memory_near_linear", (3.0..=5.0).contains(&ratio));
    }
    if let Some(p) = points.iter().find(|p| p.n == 196) {
        report.check("flops_n196_below_1e7", p.traversal_flops() < 10_000_000);
    }
    Ok(report)
}

/// Boundary crossings of the raster, separating-eigenvector and random orders
/// on a two-cluster fixture.
pub fn cluster_crossings(cfg: &ModelConfig, side: usize, seed: u64) -> Result<(Option<usize>, usize, usize)> {
    let img = synth_two_cluster(side, side, cfg.patch, 0.5, seed)?;
    let w = ModelWeights::seeded(cfg, cfg.weights_seed)?;
    let st = spectral_traversal(&stem_features(&img, &w, cfg)?, cfg)?;
    let left: Vec<bool> = (0..side * side).map(|i| i % side < side / 2).collect();
    let spectral = crate::traversal::separating_eigenvector(&st.basis, &left)
        .map(|j| boundary_crossings(&st.plan.orders[2 * j], &left));
    let raster = boundary_crossings(&crate::traversal::raster_order(side * side), &left);
    let random = boundary_crossings(&crate::traversal::random_order(side * side, seed), &left);
    Ok((spectral, raster, random))
}
