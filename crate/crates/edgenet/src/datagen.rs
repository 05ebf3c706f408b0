//! Dataset generation: synthetic source localization over stochastic block
//! models, and MovieLens-style ratings ingestion into a movie-similarity
//! graph regression task.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{community_assignment, GraphShiftOperator};

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    /// Class index for classification tasks.
    Class(usize),
    /// Scalar regression target.
    Value(f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleMeta {
    /// Diffusion time for source-localization samples.
    pub diffusion_t: Option<usize>,
    /// User id for ratings samples.
    pub user: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub signal: Array1<f64>,
    pub label: Label,
    pub meta: SampleMeta,
}

/// Train/validation/test lists plus the generation record.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub seed: u64,
    /// Node whose value regression targets predict, when applicable.
    pub target_node: Option<usize>,
    /// Class count for classification tasks.
    pub classes: Option<usize>,
    /// Human-readable record of the generation parameters.
    pub description: String,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Default diffusion-time cap; diffusion on a normalized operator is
/// numerically negligible beyond this horizon.
pub const DEFAULT_T_MAX: usize = 20;

/// Default noise level relative to the unit-norm source delta.
pub const DEFAULT_NOISE_STD: f64 = 1e-2;

/// Highest-degree node of each contiguous community block.
pub fn community_sources(s: &GraphShiftOperator, communities: usize) -> Vec<usize> {
    let n = s.n();
    let assignment = community_assignment(n, communities);
    let mut sources = vec![0usize; communities];
    let mut best = vec![0usize; communities];
    let mut seen = vec![false; communities];
    for i in 0..n {
        let c = assignment[i];
        let deg = s.degree(i);
        if !seen[c] || deg > best[c] {
            seen[c] = true;
            best[c] = deg;
            sources[c] = i;
        }
    }
    sources
}

/// Generate a source-localization dataset: a Kronecker delta at one
/// community's source node, diffused `t` hops and corrupted by Gaussian
/// noise; the label is the community index.
///
/// `sizes` is `(train, validation, test)`; the community and `t` in
/// `1..=t_max` are drawn uniformly per sample.
pub fn gen_source_localization(
    s: &GraphShiftOperator,
    communities: usize,
    sizes: (usize, usize, usize),
    t_max: usize,
    noise_std: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if communities == 0 || s.n() % communities != 0 {
        return Err(Error::InvalidParameter(format!(
            "communities = {communities} does not divide n = {}",
            s.n()
        )));
    }
    if t_max == 0 {
        return Err(Error::InvalidParameter("t_max must be >= 1".into()));
    }
    if noise_std < 0.0 {
        return Err(Error::InvalidParameter("noise_std must be >= 0".into()));
    }
    let sources = community_sources(s, communities);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = s.n();
    let gen = |count: usize, rng: &mut ChaCha20Rng| -> Vec<LabeledSample> {
        (0..count)
            .map(|_| {
                let c = rng.random_range(0..communities);
                let t = rng.random_range(1..=t_max);
                let mut x = Array1::<f64>::zeros(n);
                x[sources[c]] = 1.0;
                for _ in 0..t {
                    x = s.shift(&x);
                }
                if noise_std > 0.0 {
                    for v in x.iter_mut() {
                        *v += noise_std * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                LabeledSample {
                    signal: x,
                    label: Label::Class(c),
                    meta: SampleMeta { diffusion_t: Some(t), user: None },
                }
            })
            .collect()
    };
    let train = gen(sizes.0, &mut rng);
    let validation = gen(sizes.1, &mut rng);
    let test = gen(sizes.2, &mut rng);
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
        target_node: None,
        classes: Some(communities),
        description: format!(
            "source_localization n={n} communities={communities} t_max={t_max} noise_std={noise_std} sizes={sizes:?}"
        ),
    })
}

/// Policy for negative Pearson similarities during graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativePolicy {
    /// Drop nonpositive similarities (default).
    Drop,
    /// Keep the absolute value.
    Absolute,
}

/// Everything produced by ratings ingestion.
#[derive(Debug)]
pub struct RatingsData {
    pub graph: GraphShiftOperator,
    pub split: DatasetSplit,
    /// 1-based id of the target movie.
    pub target_movie: u32,
    /// 0-based node index of the target movie.
    pub target_node: usize,
    pub n_movies: usize,
    pub n_users: usize,
    /// All user signals (target entry zeroed), one per user in the file.
    pub n_signals: usize,
    /// Mean of all observed training-split target ratings.
    pub global_mean_rating: f64,
    /// Similar-connection count each node selected before symmetrization
    /// (at most `top_k` by construction).
    pub outgoing_selections: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Similar connections kept per node before symmetrization.
    pub top_k: usize,
    /// Predict this movie id; `None` picks the most-rated movie.
    pub target_movie: Option<u32>,
    pub negative_policy: NegativePolicy,
    /// Fraction of labeled users placed in the training split.
    pub train_fraction: f64,
    /// Shuffle seed for the train/test split.
    pub split_seed: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            top_k: 10,
            target_movie: None,
            negative_policy: NegativePolicy::Drop,
            train_fraction: 0.9,
            split_seed: 0,
        }
    }
}

/// Parse tab-separated `user item rating timestamp` lines.
fn parse_ratings<R: BufRead>(r: R) -> Result<Vec<(u32, u32, f64)>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut field = |what: &str| -> Result<&str> {
            parts.next().ok_or_else(|| Error::Parse { line: lineno, msg: format!("missing {what}") })
        };
        let user: u32 = field("user")?
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: "bad user id".into() })?;
        let item: u32 = field("item")?
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: "bad item id".into() })?;
        let rating: f64 = field("rating")?
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: "bad rating".into() })?;
        // timestamp column is present in the format but unused
        if user == 0 || item == 0 {
            return Err(Error::Parse { line: lineno, msg: "ids are 1-based".into() });
        }
        out.push((user, item, rating));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Pearson correlation of two rating lists over their co-raters; zero when
/// fewer than two users co-rated or either side has no variance.
fn pearson_over_coraters(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    // both lists sorted by user id; two-pointer intersection
    let mut i = 0;
    let mut j = 0;
    let mut m = 0usize;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let x = a[i].1;
                let y = b[j].1;
                m += 1;
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
                i += 1;
                j += 1;
            }
        }
    }
    if m < 2 {
        return 0.0;
    }
    let mf = m as f64;
    let cov = sxy - sx * sy / mf;
    let vx = sxx - sx * sx / mf;
    let vy = syy - sy * sy / mf;
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Ingest a ratings stream into a movie-similarity graph and per-user signal
/// dataset targeting one movie's ratings.
pub fn ingest_movielens<R: BufRead>(r: R, options: IngestOptions) -> Result<RatingsData> {
    let ratings = parse_ratings(r)?;
    let n_movies = ratings.iter().map(|&(_, item, _)| item).max().unwrap() as usize;

    // per-movie rating lists, sorted by user id
    let mut by_movie: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_movies];
    let mut by_user: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for &(user, item, rating) in &ratings {
        by_movie[(item - 1) as usize].push((user, rating));
        by_user.entry(user).or_default().push((item, rating));
    }
    for list in &mut by_movie {
        list.sort_by_key(|&(u, _)| u);
    }
    let n_users = by_user.len();

    // target movie: configured id, or the most-rated one (smallest id wins ties)
    let rating_counts: Vec<usize> = by_movie.iter().map(|l| l.len()).collect();
    let target_movie = match options.target_movie {
        Some(id) => {
            if id == 0 || id as usize > n_movies || rating_counts[(id - 1) as usize] == 0 {
                let mut ranked: Vec<(u32, usize)> = rating_counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| ((i + 1) as u32, c))
                    .collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                let candidates: Vec<String> = ranked
                    .iter()
                    .take(5)
                    .map(|(id, c)| format!("{id} ({c} ratings)"))
                    .collect();
                return Err(Error::UnknownTarget { id, candidates: candidates.join(", ") });
            }
            id
        }
        None => {
            let (best_idx, _) = rating_counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            (best_idx + 1) as u32
        }
    };
    let target_node = (target_movie - 1) as usize;

    // Pearson similarity over co-raters, pruned to top-k per node, then
    // symmetrized by keeping an edge if either endpoint selected it.
    let mut adj = ndarray::Array2::<f64>::zeros((n_movies, n_movies));
    let sims: Vec<Vec<(usize, f64)>> = (0..n_movies)
        .map(|a| {
            let mut row = Vec::new();
            if by_movie[a].len() < 2 {
                return row;
            }
            for b in 0..n_movies {
                if a == b || by_movie[b].len() < 2 {
                    continue;
                }
                let sim = pearson_over_coraters(&by_movie[a], &by_movie[b]);
                let weight = match options.negative_policy {
                    NegativePolicy::Drop => {
                        if sim > 0.0 {
                            sim
                        } else {
                            continue;
                        }
                    }
                    NegativePolicy::Absolute => {
                        if sim != 0.0 {
                            sim.abs()
                        } else {
                            continue;
                        }
                    }
                };
                row.push((b, weight));
            }
            // top-k by weight, ties broken by smaller index
            row.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            row.truncate(options.top_k);
            row
        })
        .collect();
    for (a, row) in sims.iter().enumerate() {
        for &(b, w) in row {
            adj[[a, b]] = w;
            adj[[b, a]] = w;
        }
    }
    let graph = GraphShiftOperator::from_matrix(adj)?;

    // user signals: known ratings with the target entry zeroed
    let mut labeled = Vec::new();
    let mut unlabeled = 0usize;
    for (&user, items) in &by_user {
        let mut signal = Array1::<f64>::zeros(n_movies);
        let mut target_rating = None;
        for &(item, rating) in items {
            let node = (item - 1) as usize;
            if node == target_node {
                target_rating = Some(rating);
            } else {
                signal[node] = rating;
            }
        }
        match target_rating {
            Some(t) => labeled.push(LabeledSample {
                signal,
                label: Label::Value(t),
                meta: SampleMeta { diffusion_t: None, user: Some(user) },
            }),
            None => unlabeled += 1,
        }
    }
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // deterministic shuffled split of the labeled users
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha20Rng::seed_from_u64(options.split_seed);
        order.shuffle(&mut rng);
    }
    let train_count =
        ((labeled.len() as f64) * options.train_fraction).round().clamp(1.0, labeled.len() as f64 - 1.0)
            as usize;
    let mut train = Vec::with_capacity(train_count);
    let mut test = Vec::with_capacity(labeled.len() - train_count);
    for (pos, &idx) in order.iter().enumerate() {
        if pos < train_count {
            train.push(labeled[idx].clone());
        } else {
            test.push(labeled[idx].clone());
        }
    }
    let global_mean_rating = {
        let sum: f64 = train
            .iter()
            .map(|s| match s.label {
                Label::Value(v) => v,
                Label::Class(_) => 0.0,
            })
            .sum();
        sum / train.len() as f64
    };
    let n_signals = labeled.len() + unlabeled;
    let split = DatasetSplit {
        train,
        validation: Vec::new(),
        test,
        seed: options.split_seed,
        target_node: Some(target_node),
        classes: None,
        description: format!(
            "ratings n_movies={n_movies} n_users={n_users} target_movie={target_movie} top_k={}",
            options.top_k
        ),
    };
    Ok(RatingsData {
        graph,
        split,
        target_movie,
        target_node,
        n_movies,
        n_users,
        n_signals,
        global_mean_rating,
    })
}

/// Write a synthetic ratings file in the tab-separated four-column layout:
/// planted low-rank user-type x movie-genre structure plus noise, every
/// movie rated at least once and every user rating the target-heavy block.
/// Useful as a demo fixture when the real dataset is unavailable.
pub fn write_synthetic_ratings<W: Write>(
    mut w: W,
    n_users: u32,
    n_movies: u32,
    ratings_per_user: u32,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let types = 4u32;
    let genres = 4u32;
    for user in 1..=n_users {
        let utype = user % types;
        let mut rated = std::collections::BTreeSet::new();
        // movie 1 is the designated heavy-traffic target: every user rates it
        rated.insert(1u32);
        // cover every movie across users deterministically
        let covered = (user - 1) % n_movies + 1;
        rated.insert(covered);
        while (rated.len() as u32) < ratings_per_user.min(n_movies) {
            rated.insert(rng.random_range(1..=n_movies));
        }
        for item in rated {
            let genre = item % genres;
            let affinity = if utype == genre { 4.5 } else { 2.5 };
            let noise: f64 = rng.sample::<f64, _>(StandardNormal);
            let rating = (affinity + 0.7 * noise).clamp(1.0, 5.0);
            let timestamp = 880_000_000u64 + (user as u64) * 1000 + item as u64;
            writeln!(w, "{user}\t{item}\t{rating:.0}\t{timestamp}")?;
        }
    }
    Ok(())
}

/// Self-describing plain-text dataset container: a header line, then one
/// sample per line (`split label meta values...`).
pub fn save_dataset<W: Write>(split: &DatasetSplit, mut w: W) -> Result<()> {
    let n = split
        .train
        .first()
        .or(split.validation.first())
        .or(split.test.first())
        .map(|s| s.signal.len())
        .unwrap_or(0);
    writeln!(
        w,
        "{{\"format\":\"edgenet-dataset-v1\",\"n\":{},\"seed\":{},\"target_node\":{},\"classes\":{},\"description\":\"{}\"}}",
        n,
        split.seed,
        split.target_node.map_or("null".into(), |t| t.to_string()),
        split.classes.map_or("null".into(), |c| c.to_string()),
        split.description.replace('"', "'"),
    )?;
    let mut dump = |tag: &str, samples: &[LabeledSample]| -> Result<()> {
        for s in samples {
            let label = match &s.label {
                Label::Class(c) => format!("class:{c}"),
                Label::Value(v) => format!("value:{v}"),
            };
            let meta = format!(
                "t={};user={}",
                s.meta.diffusion_t.map_or("-".into(), |t| t.to_string()),
                s.meta.user.map_or("-".into(), |u| u.to_string())
            );
            let vals: Vec<String> = s.signal.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{tag} {label} {meta} {}", vals.join(" "))?;
        }
        Ok(())
    };
    dump("train", &split.train)?;
    dump("validation", &split.validation)?;
    dump("test", &split.test)?;
    Ok(())
}

/// Load the container written by [`save_dataset`].
pub fn load_dataset<R: BufRead>(r: R) -> Result<DatasetSplit> {
    let mut lines = r.lines().enumerate();
    let (_, header) =
        lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let grab = |key: &str| -> Option<String> {
        let pat = format!("\"{key}\":");
        let start = header.find(&pat)? + pat.len();
        let rest = &header[start..];
        let end = rest.find([',', '}'])?;
        Some(rest[..end].trim().trim_matches('"').to_string())
    };
    let seed: u64 = grab("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    let target_node = grab("target_node").and_then(|s| s.parse::<usize>().ok());
    let classes = grab("classes").and_then(|s| s.parse::<usize>().ok());
    let description = grab("description").unwrap_or_default();

    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
        target_node,
        classes,
        description,
    };
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts
            .next()
            .ok_or_else(|| Error::Parse { line: lineno, msg: "missing split tag".into() })?;
        let label_tok = parts
            .next()
            .ok_or_else(|| Error::Parse { line: lineno, msg: "missing label".into() })?;
        let label = if let Some(c) = label_tok.strip_prefix("class:") {
            Label::Class(
                c.parse()
                    .map_err(|_| Error::Parse { line: lineno, msg: "bad class".into() })?,
            )
        } else if let Some(v) = label_tok.strip_prefix("value:") {
            Label::Value(
                v.parse()
                    .map_err(|_| Error::Parse { line: lineno, msg: "bad value".into() })?,
            )
        } else {
            return Err(Error::Parse { line: lineno, msg: "unknown label kind".into() });
        };
        let meta_tok = parts
            .next()
            .ok_or_else(|| Error::Parse { line: lineno, msg: "missing meta".into() })?;
        let mut meta = SampleMeta::default();
        for piece in meta_tok.split(';') {
            if let Some(t) = piece.strip_prefix("t=") {
                meta.diffusion_t = t.parse().ok();
            } else if let Some(u) = piece.strip_prefix("user=") {
                meta.user = u.parse().ok();
            }
        }
        let values: std::result::Result<Vec<f64>, _> =
            parts.map(|t| t.parse::<f64>()).collect();
        let values =
            values.map_err(|_| Error::Parse { line: lineno, msg: "bad signal value".into() })?;
        let sample = LabeledSample { signal: Array1::from_vec(values), label, meta };
        match tag {
            "train" => split.train.push(sample),
            "validation" => split.validation.push(sample),
            "test" => split.test.push(sample),
            other => {
                return Err(Error::Parse { line: lineno, msg: format!("unknown split {other}") })
            }
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_sbm;
    use crate::linalg::norm2;

    #[test]
    fn diffusion_at_t1_is_exact_shift() {
        let s = build_sbm(20, 4, 0.8, 0.2, 1).unwrap();
        let split = gen_source_localization(&s, 4, (30, 0, 0), 1, 0.0, 2).unwrap();
        let sources = community_sources(&s, 4);
        for sample in &split.train {
            let Label::Class(c) = sample.label else { panic!() };
            let mut delta = Array1::<f64>::zeros(20);
            delta[sources[c]] = 1.0;
            let want = s.shift(&delta);
            assert!(norm2(&(&sample.signal - &want)) < 1e-14);
            assert_eq!(sample.meta.diffusion_t, Some(1));
        }
    }

    #[test]
    fn label_distribution_is_roughly_uniform() {
        let s = build_sbm(20, 5, 0.9, 0.2, 3).unwrap();
        let total = 5000;
        let split = gen_source_localization(&s, 5, (total, 0, 0), 10, 0.01, 4).unwrap();
        let mut counts = vec![0usize; 5];
        for sample in &split.train {
            let Label::Class(c) = sample.label else { panic!() };
            counts[c] += 1;
        }
        // binomial 3-sigma window around total / 5
        let p = 0.2;
        let sigma = ((total as f64) * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                ((c as f64) - (total as f64) * p).abs() <= 3.0 * sigma,
                "counts {counts:?}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = build_sbm(20, 4, 0.8, 0.2, 5).unwrap();
        let a = gen_source_localization(&s, 4, (10, 5, 5), 6, 0.01, 42).unwrap();
        let b = gen_source_localization(&s, 4, (10, 5, 5), 6, 0.01, 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn diffusion_norm_is_bounded() {
        let s = build_sbm(20, 4, 0.8, 0.2, 6).unwrap();
        let split = gen_source_localization(&s, 4, (50, 0, 0), 8, 0.0, 7).unwrap();
        for sample in &split.train {
            // noiseless diffusion of a unit delta through a unit-norm operator
            assert!(norm2(&sample.signal) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn identical_users_give_perfect_similarity() {
        // two users rate movies 1 and 2 identically (with variance)
        let file = "1\t1\t5\t0\n1\t2\t1\t0\n2\t1\t5\t0\n2\t2\t1\t0\n1\t3\t3\t0\n2\t3\t3\t0\n";
        let data = ingest_movielens(
            file.as_bytes(),
            IngestOptions { target_movie: Some(3), ..Default::default() },
        )
        .unwrap();
        // Pearson between movies 1 and 2 over the two co-raters:
        // both vectors are (5, 5) and (1, 1)... constant, so similarity 0;
        // instead movies with variance: users rate (5,1) on movie 1 and 2.
        // Movie 1 ratings: (5, 5); movie 2: (1, 1) -> zero variance -> 0.
        assert_eq!(data.graph.matrix()[[0, 1]], 0.0);
    }

    #[test]
    fn pearson_hand_computed_values() {
        // three movies, three users, designed so movies 1 and 2 correlate
        // perfectly and movies 1 and 3 anti-correlate.
        // user u rates: m1 = u, m2 = 2u + 1, m3 = 6 - u  (u = 1, 2, 3)
        let mut file = String::new();
        for u in 1..=3 {
            file.push_str(&format!("{u}\t1\t{}\t0\n", u));
            file.push_str(&format!("{u}\t2\t{}\t0\n", 2 * u + 1));
            file.push_str(&format!("{u}\t3\t{}\t0\n", 6 - u));
        }
        let data = ingest_movielens(
            file.as_bytes(),
            IngestOptions { target_movie: Some(2), ..Default::default() },
        )
        .unwrap();
        // positive perfect correlation survives pruning; note the stored
        // graph is normalized, so compare ratios against the raw value 1.0
        assert!(data.graph.matrix()[[0, 1]] > 0.0);
        // anti-correlated pair is dropped under the default policy
        assert_eq!(data.graph.matrix()[[0, 2]], 0.0);

        // absolute policy keeps it
        let data = ingest_movielens(
            file.as_bytes(),
            IngestOptions {
                target_movie: Some(2),
                negative_policy: NegativePolicy::Absolute,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(data.graph.matrix()[[0, 2]] > 0.0);

        // raw Pearson check with the helper itself (un-normalized): exact 1 and -1
        let m1: Vec<(u32, f64)> = vec![(1, 1.0), (2, 2.0), (3, 3.0)];
        let m2: Vec<(u32, f64)> = vec![(1, 3.0), (2, 5.0), (3, 7.0)];
        let m3: Vec<(u32, f64)> = vec![(1, 5.0), (2, 4.0), (3, 3.0)];
        assert!((pearson_over_coraters(&m1, &m2) - 1.0).abs() < 1e-12);
        assert!((pearson_over_coraters(&m1, &m3) + 1.0).abs() < 1e-12);
        // fewer than two co-raters: similarity 0
        let lonely: Vec<(u32, f64)> = vec![(9, 4.0)];
        assert_eq!(pearson_over_coraters(&m1, &lonely), 0.0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let file = "1\t1\t5\t0\nbogus line here\n";
        match ingest_movielens(file.as_bytes(), IngestOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_target_lists_candidates() {
        let file = "1\t1\t5\t0\n2\t1\t4\t0\n1\t2\t3\t0\n";
        match ingest_movielens(
            file.as_bytes(),
            IngestOptions { target_movie: Some(99), ..Default::default() },
        ) {
            Err(Error::UnknownTarget { id, candidates }) => {
                assert_eq!(id, 99);
                assert!(candidates.starts_with("1 (2 ratings)"), "{candidates}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn synthetic_full_size_counts() {
        let mut buf = Vec::new();
        write_synthetic_ratings(&mut buf, 200, 150, 40, 9).unwrap();
        let data = ingest_movielens(buf.as_slice(), IngestOptions::default()).unwrap();
        assert_eq!(data.n_users, 200);
        assert_eq!(data.n_movies, 150);
        assert_eq!(data.n_signals, 200);
        // target defaults to the most-rated movie: the planted id 1
        assert_eq!(data.target_movie, 1);
        // ingestion determinism
        let again = ingest_movielens(buf.as_slice(), IngestOptions::default()).unwrap();
        assert_eq!(data.graph.matrix(), again.graph.matrix());
        // pruning bound: every node selected at most top_k neighbors, and
        // every movie with co-raters found at least one positive similarity
        assert!(data.outgoing_selections.iter().all(|&c| c <= 10));
        assert!(data.outgoing_selections.iter().any(|&c| c == 10));
        assert!(data.outgoing_selections.iter().all(|&c| c >= 1));
        // 90/10 split of labeled users
        assert_eq!(data.split.train.len() + data.split.test.len(), 200);
        assert_eq!(data.split.train.len(), 180);
        // target column zeroed in the signals
        for s in data.split.train.iter().chain(&data.split.test) {
            assert_eq!(s.signal[data.target_node], 0.0);
        }
    }

    #[test]
    fn dataset_container_roundtrip() {
        let s = build_sbm(10, 2, 0.9, 0.4, 8).unwrap();
        let split = gen_source_localization(&s, 2, (4, 2, 2), 3, 0.05, 11).unwrap();
        let mut buf = Vec::new();
        save_dataset(&split, &mut buf).unwrap();
        let loaded = load_dataset(buf.as_slice()).unwrap();
        assert_eq!(loaded.train.len(), 4);
        assert_eq!(loaded.classes, Some(2));
        for (a, b) in split.train.iter().zip(&loaded.train) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.meta, b.meta);
            assert!(norm2(&(&a.signal - &b.signal)) == 0.0);
        }
    }
}
