//! Second feature extractor written directly against the text format.
//! Expects default feature parameters and every set in canonical order.

use std::collections::{HashMap, HashSet};

const N: usize = 10;
const M: usize = 64;

fn stats(mut xs: Vec<u64>) -> Vec<f64> {
    if xs.is_empty() {
        return vec![0.0; 11 + N];
    }
    xs.sort();
    let n = xs.len();
    let max = *xs.last().unwrap();
    let mut out = vec![xs[0] as f64, max as f64];
    for q in 1..=9usize {
        // smallest rank r with r/n >= q/10
        let r = (1..=n).find(|r| 10 * r >= q * n).unwrap();
        out.push(xs[r - 1] as f64);
    }
    let mut hist = vec![0.0; N];
    for x in xs {
        let b = if max == 0 { 0 } else { ((x * N as u64) / max).min(N as u64 - 1) as usize };
        hist[b] += 1.0;
    }
    out.extend(hist);
    out
}

fn first_counts(seq: &[&str]) -> Vec<f64> {
    let mut seen: Vec<&str> = Vec::new();
    for p in seq {
        if !seen.contains(p) {
            seen.push(p);
        }
    }
    (0..M)
        .map(|i| seen.get(i).map_or(0.0, |p| seq.iter().filter(|q| *q == p).count() as f64))
        .collect()
}

pub fn text_features(text: &str) -> Vec<f64> {
    let has_markers = text.lines().any(|l| l.starts_with("MARK"));
    let mut inside = !has_markers;
    let mut cf: Vec<&str> = Vec::new();
    let mut da: Vec<&str> = Vec::new();
    let mut lines: Vec<(&str, u64)> = Vec::new();
    let mut blocks: Vec<(&str, u64)> = Vec::new();
    let mut da_after_cf: Vec<u64> = Vec::new();
    for line in text.lines() {
        let w: Vec<&str> = line.split(' ').collect();
        match w[0] {
            "MARK" => inside = w[1] == "START",
            _ if !inside => {}
            "CF" => {
                cf.push(w[1]);
                da_after_cf.push(0);
            }
            "MA" => {
                da.push(w[1]);
                if let Some(c) = da_after_cf.last_mut() {
                    *c += 1;
                }
                if w.len() == 4 {
                    for l in w[3].split(',') {
                        lines.push((w[1], l.parse().unwrap()));
                    }
                }
            }
            "CI" => blocks.push((w[1], w[3].parse().unwrap())),
            _ => {}
        }
    }
    let uniq = |v: &[&str]| v.iter().collect::<HashSet<_>>().len() as f64;
    let uniq2 = |v: &[(&str, u64)]| v.iter().collect::<HashSet<_>>().len() as f64;
    let mut out = vec![cf.len() as f64, uniq(&cf), da.len() as f64, uniq(&da)];
    out.extend([lines.len() as f64, uniq2(&lines), blocks.len() as f64, uniq2(&blocks)]);
    let mut h = vec![0.0; 320];
    for (_, l) in &lines {
        h[*l as usize] += 1.0;
    }
    for (_, b) in &blocks {
        h[64 + *b as usize] += 1.0;
    }
    out.extend(h);
    let per_page = |v: &[(&str, u64)]| {
        let mut tot: HashMap<&str, u64> = HashMap::new();
        let mut uni: HashMap<&str, HashSet<u64>> = HashMap::new();
        for (p, x) in v {
            *tot.entry(p).or_default() += 1;
            uni.entry(p).or_default().insert(*x);
        }
        (tot.into_values().collect::<Vec<_>>(), uni.into_values().map(|s| s.len() as u64).collect::<Vec<_>>())
    };
    let (lt, lu) = per_page(&lines);
    let (bt, bu) = per_page(&blocks);
    for fam in [da_after_cf, lt, lu, bt, bu] {
        out.extend(stats(fam));
    }
    out.extend(first_counts(&cf));
    out.extend(first_counts(&da));
    out
}
