//! Synthetic instances, triplet ingestion, splitting and graph Laplacians.
//!
//! All randomness comes from `ChaCha8Rng` seeded with the caller's seed, so
//! generated data and splits are identical across platforms.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::observed::ObservedMatrix;

/// Tolerance for symmetry of affinity matrices.
pub const AFFINITY_SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub ground_truth: DenseMatrix,
    pub train: ObservedMatrix,
    pub validation: ObservedMatrix,
    pub true_rank: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticInstance {
    /// Every observed entry, train and validation together.
    pub fn observed(&self) -> ObservedMatrix {
        self.train
            .union(&self.validation)
            .expect("train and validation are disjoint by construction")
    }
}

/// `round(multiplier · 2 · m · k · ln m)`.
pub fn synthetic_nnz(m: usize, k_star: usize, multiplier: f64) -> usize {
    (multiplier * 2.0 * m as f64 * k_star as f64 * (m as f64).ln()).round() as usize
}

/// Square `m × m` instance `G = W Hᵀ` with standard normal `W, H ∈ ℝ^{m×k*}`.
///
/// Observed values are `G + E` with `E_ij ~ N(0, noise_std²)`. The sampled
/// positions are split evenly between train and validation.
pub fn generate_synthetic(
    m: usize,
    k_star: usize,
    noise_std: f64,
    sparsity_multiplier: f64,
    seed: u64,
) -> Result<SyntheticInstance> {
    if k_star == 0 || m < k_star {
        return Err(Error::invalid(format!("need m >= k* >= 1, got m={m}, k*={k_star}")));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise_std must be >= 0, got {noise_std}")));
    }
    if !(sparsity_multiplier > 0.0 && sparsity_multiplier.is_finite()) {
        return Err(Error::invalid(format!(
            "sparsity multiplier must be > 0, got {sparsity_multiplier}"
        )));
    }
    let nnz = synthetic_nnz(m, k_star, sparsity_multiplier);
    let total = m * m;
    if nnz > total {
        return Err(Error::invalid(format!("{nnz} observations requested but only {total} positions")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let w = DenseMatrix::from_fn(m, k_star, |_, _| draw(&mut rng));
    let h = DenseMatrix::from_fn(m, k_star, |_, _| draw(&mut rng));
    let g = w.matmul_transpose(&h)?;

    let positions = index::sample(&mut rng, total, nnz).into_vec();
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let entries: Vec<_> = positions
        .iter()
        .map(|&p| {
            let (i, j) = (p / m, p % m);
            (i, j, g.get(i, j) + noise.sample(&mut rng))
        })
        .collect();
    let (train, val) = entries.split_at(nnz / 2 + nnz % 2);

    Ok(SyntheticInstance {
        ground_truth: g,
        train: ObservedMatrix::new(m, m, train.to_vec())?,
        validation: ObservedMatrix::new(m, m, val.to_vec())?,
        true_rank: k_star,
        noise_std,
        seed,
    })
}

/// Reads `row<sep>col<sep>value` lines, with comma, tab or whitespace
/// separators.
///
/// A first line that does not parse as numbers is treated as a header.
/// Blank lines and lines starting with `#` are ignored.
pub fn load_triplets(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    one_based: bool,
) -> Result<ObservedMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triplets(&text, rows, cols, one_based).map_err(|e| with_path(e, path))
}

/// Same as [`load_triplets`] on in-memory text.
pub fn parse_triplets(text: &str, rows: usize, cols: usize, one_based: bool) -> Result<ObservedMatrix> {
    let entries = parse_entries(text, Some((rows, cols)), one_based)?;
    ObservedMatrix::new(rows, cols, entries)
}

/// Loads a triplet file whose shape is the smallest one containing every
/// index.
pub fn load_triplets_inferred(path: impl AsRef<Path>, one_based: bool) -> Result<ObservedMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse_entries(&text, None, one_based).map_err(|e| with_path(e, path))?;
    let rows = entries.iter().map(|e| e.0 + 1).max();
    let cols = entries.iter().map(|e| e.1 + 1).max();
    match (rows, cols) {
        (Some(r), Some(c)) => ObservedMatrix::new(r, c, entries),
        _ => Err(Error::invalid(format!("{}: no entries", path.display()))),
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    }
}

fn parse_entries(
    text: &str,
    shape: Option<(usize, usize)>,
    one_based: bool,
) -> Result<Vec<(usize, usize, f64)>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: "<input>".into(),
        line,
        message,
    };
    let mut entries = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut first_content = true;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let is_header = first_content && !fields.iter().any(|f| f.parse::<f64>().is_ok());
        first_content = false;
        if is_header {
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(line_no, format!("expected 3 fields, found {}", fields.len())));
        }
        let index = |f: &str, what: &str| -> Result<usize> {
            let raw: usize = f
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid {what} index `{f}`")))?;
            if one_based {
                raw.checked_sub(1)
                    .ok_or_else(|| parse_err(line_no, format!("{what} index 0 in one-based file")))
            } else {
                Ok(raw)
            }
        };
        let i = index(fields[0], "row")?;
        let j = index(fields[1], "column")?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid value `{}`", fields[2])))?;
        if !v.is_finite() {
            return Err(parse_err(line_no, format!("non-finite value `{}`", fields[2])));
        }
        if let Some((rows, cols)) = shape {
            if i >= rows || j >= cols {
                return Err(parse_err(
                    line_no,
                    format!("entry ({i}, {j}) outside {rows}x{cols}"),
                ));
            }
        }
        if seen.insert((i, j), line_no).is_some() {
            return Err(Error::DuplicateEntry { row: i, col: j, line: line_no });
        }
        entries.push((i, j, v));
    }
    Ok(entries)
}

/// Writes one-based `row,col,value` lines.
pub fn write_triplets(path: impl AsRef<Path>, obs: &ObservedMatrix) -> Result<()> {
    use std::fmt::Write as _;
    let path = path.as_ref();
    let mut out = String::with_capacity(obs.nnz() * 16);
    for (i, j, v) in obs.iter() {
        let _ = writeln!(out, "{},{},{}", i + 1, j + 1, v);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Randomly partitions entries into train, validation and test.
///
/// Sizes use largest-remainder rounding; ties go to the earlier part.
pub fn split_observations(
    obs: &ObservedMatrix,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(ObservedMatrix, ObservedMatrix, ObservedMatrix)> {
    if obs.is_empty() {
        return Err(Error::invalid("cannot split an empty observation set"));
    }
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("split fractions must be >= 0, got {f:?}")));
    }
    if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions must sum to 1, got {f:?}")));
    }
    let sizes = largest_remainder(obs.nnz(), &f);

    let mut order: Vec<usize> = (0..obs.nnz()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, rest) = order.split_at(sizes[0]);
    let (b, c) = rest.split_at(sizes[1]);
    Ok((obs.select(a), obs.select(b), obs.select(c)))
}

fn largest_remainder(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut left = n - sizes.iter().sum::<usize>();
    let mut by_rem: Vec<usize> = (0..3).collect();
    by_rem.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &p in by_rem.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[p] += 1;
        left -= 1;
    }
    sizes
}

/// `L = D − A` with `D = diag(row sums of A)`.
pub fn build_laplacian(affinity: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, c) = affinity.shape();
    if n != c {
        return Err(Error::shape(format!("affinity must be square, got {n}x{c}")));
    }
    if !affinity.is_finite() {
        return Err(Error::invalid("affinity has non-finite entries"));
    }
    if affinity.as_slice().iter().any(|&a| a < 0.0) {
        return Err(Error::invalid("affinity has negative entries"));
    }
    let asym = affinity.max_asymmetry()?;
    if asym > AFFINITY_SYMMETRY_TOL {
        return Err(Error::invalid(format!("affinity is not symmetric (max |A - Aᵀ| = {asym:e})")));
    }
    let mut l = affinity.scaled(-1.0);
    for i in 0..n {
        let degree: f64 = affinity.row(i).iter().sum();
        l.set(i, i, l.get(i, i) + degree);
    }
    Ok(l)
}

/// Writes `m` as a dense comma-separated grid, the format read by
/// [`load_affinity`].
pub fn write_dense_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    use std::fmt::Write as _;
    let path = path.as_ref();
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Dense comma-separated grid, one matrix row per line.
pub fn load_affinity(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: empty affinity file", path.display())));
    }
    DenseMatrix::from_rows(&rows)
}
