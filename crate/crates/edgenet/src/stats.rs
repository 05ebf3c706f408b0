//! Small statistical helpers for the experiment protocols: Spearman rank
//! correlation, an exact one-sided sign test, and through-origin regression.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two points.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Ranks with ties assigned their average rank (1-based).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. NaN-free inputs assumed; returns 0 when either
/// side is constant.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Exact one-sided sign test: probability of at least `wins` successes in
/// `trials` fair coin flips. Ties must be excluded by the caller.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let m = trials as f64;
    let ln2m = m * std::f64::consts::LN_2;
    // ln C(m, k) built incrementally
    let mut ln_c = 0.0f64;
    let mut p = 0.0f64;
    for k in 0..=trials {
        if k >= wins {
            p += (ln_c - ln2m).exp();
        }
        if k < trials {
            ln_c += ((trials - k) as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    p.min(1.0)
}

/// Least-squares line through the origin. Returns `(slope, r_squared)`, with
/// the coefficient of determination computed against the centered total sum
/// of squares.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = sxy / sxx;
    let my = mean(ys);
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if ss_tot == 0.0 {
        return (slope, if ss_res < 1e-300 { 1.0 } else { 0.0 });
    }
    (slope, 1.0 - ss_res / ss_tot)
}
