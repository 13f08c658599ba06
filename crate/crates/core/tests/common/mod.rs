//! Reference implementations written straight from the metric definitions,
//! independent of the library's position-based code paths. Shared with the
//! acceptance suite.
#![allow(dead_code)]

use num_rational::Ratio;

pub type Q = Ratio<i128>;

/// Every permutation of `0..n`, in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

fn label_rank(label: &[usize], doc: usize) -> usize {
    1 + label.iter().position(|&d| d == doc).expect("doc in label")
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// NDCG@k with integer gains `n - rank` for label ranks within k, 0 otherwise;
/// the ideal list is the label itself.
pub fn ndcg_oracle(pred: &[usize], label: &[usize], k: usize) -> f64 {
    let n = label.len();
    if n == 1 {
        return 1.0;
    }
    let gain = |doc: usize| -> i64 {
        let r = label_rank(label, doc);
        if r <= k {
            (n - r) as i64
        } else {
            0
        }
    };
    let dcg = compensated_sum((1..=k).map(|i| gain(pred[i - 1]) as f64 / ((i + 1) as f64).log2()));
    let idcg = compensated_sum((1..=k).map(|i| gain(label[i - 1]) as f64 / ((i + 1) as f64).log2()));
    dcg / idcg
}

pub fn recall_oracle(pred: &[usize], label: &[usize], k: usize) -> Q {
    let hits = pred[..k].iter().filter(|d| label[..k].contains(d)).count();
    Q::new(hits as i128, k as i128)
}

/// Truncated RBO with persistence `p` as an exact fraction.
pub fn rbo_oracle(a: &[usize], b: &[usize], p: Q) -> Q {
    let mut sum = Q::from_integer(0);
    let mut weight = Q::from_integer(1);
    for d in 1..=a.len() {
        let overlap = a[..d].iter().filter(|x| b[..d].contains(x)).count();
        sum += weight * Q::new(overlap as i128, d as i128);
        weight *= p;
    }
    (Q::from_integer(1) - p) * sum
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

pub fn rbo_oracle_f64(a: &[usize], b: &[usize], p_num: i128, p_den: i128) -> f64 {
    to_f64(rbo_oracle(a, b, Q::new(p_num, p_den)))
}

/// Mean of the exact pairwise RBO values over all unordered pairs.
pub fn pairwise_rbo_oracle(samples: &[Vec<usize>], p: Q, normalized: bool) -> f64 {
    let n = samples[0].len();
    let identity = (Q::from_integer(1) - p) * (1..=n).fold(Q::from_integer(0), |acc, d| acc + p.pow(d as i32 - 1));
    let mut total = Q::from_integer(0);
    let mut pairs = 0i128;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let r = rbo_oracle(&samples[i], &samples[j], p);
            total += if normalized { r / identity } else { r };
            pairs += 1;
        }
    }
    to_f64(total / Q::from_integer(pairs))
}

/// Grading reward table written out case by case.
pub fn grading_table(pred: i64, truth: i64) -> f64 {
    match (pred - truth).abs() {
        0 => 1.0,
        1 if (pred <= 2) == (truth <= 2) => 0.7,
        1 => 0.4,
        _ => 0.0,
    }
}

pub fn ids(order: &[usize]) -> Vec<String> {
    order.iter().map(|i| format!("d{i}")).collect()
}
