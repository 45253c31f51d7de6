//! Summary tables and plot data computed purely from trace rows.

use std::fmt::Write as _;

use super::metrics::drop_convergence_rate;
use super::TraceRow;

/// Generations reported in the per-generation delta summary.
pub const SUMMARY_KS: [usize; 5] = [2, 5, 10, 25, 50];

/// Rows grouped by `(sequence, method, rate_point)` in first-seen order.
fn group(rows: &[TraceRow]) -> Vec<Vec<&TraceRow>> {
    let mut groups: Vec<Vec<&TraceRow>> = Vec::new();
    for r in rows {
        let key = |x: &TraceRow| (x.sequence.clone(), x.method.clone(), x.rate_point.clone());
        match groups.iter_mut().find(|g| key(g[0]) == key(r)) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    for g in &mut groups {
        g.sort_by_key(|r| r.k);
    }
    groups
}

/// Distinct methods in first-seen order.
fn methods(rows: &[TraceRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.method) {
            out.push(r.method.clone());
        }
    }
    out
}

/// First versus last generation per cell.
pub fn summary_endpoints(rows: &[TraceRow]) -> String {
    let mut s = String::from("sequence,method,rate_point,bpp_1,psnr_y_1,K,bpp_K,psnr_y_K,psnr_y_drop_K\n");
    for g in group(rows) {
        let (first, last) = (g[0], g[g.len() - 1]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            first.sequence,
            first.method,
            first.rate_point,
            first.bpp,
            first.psnr_y,
            last.k,
            last.bpp,
            last.psnr_y,
            last.drop
        );
    }
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Delta PSNR-Y at each of [`SUMMARY_KS`] per cell, then the mean per method.
pub fn summary_deltas(rows: &[TraceRow]) -> String {
    let mut s = String::from("sequence,method,rate_point");
    for k in SUMMARY_KS {
        let _ = write!(s, ",delta_psnr_y_k{k}");
    }
    s.push('\n');
    let groups = group(rows);
    let at = |g: &[&TraceRow], k: usize| g.iter().find(|r| r.k == k).and_then(|r| r.delta);
    for g in &groups {
        let _ = write!(s, "{},{},{}", g[0].sequence, g[0].method, g[0].rate_point);
        for k in SUMMARY_KS {
            let _ = write!(s, ",{}", fmt_opt(at(g, k)));
        }
        s.push('\n');
    }
    for m in methods(rows) {
        let _ = write!(s, "average,{m},all");
        for k in SUMMARY_KS {
            let vals: Vec<f64> = groups.iter().filter(|g| g[0].method == m).filter_map(|g| at(g, k)).collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let _ = write!(s, ",{}", fmt_opt(mean));
        }
        s.push('\n');
    }
    s
}

/// Mean drop convergence rate per method over all finite values, with
/// `max_drop` taken over every row passed in.
pub fn average_dcr(rows: &[TraceRow]) -> Vec<(String, Option<f64>, usize)> {
    let max_drop = rows.iter().map(|r| r.drop).fold(0.0, f64::max);
    methods(rows)
        .into_iter()
        .map(|m| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.delta)
                .filter_map(|d| drop_convergence_rate(d, max_drop).value())
                .collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            (m, mean, vals.len())
        })
        .collect()
}

/// Whitespace-separated table: `k` then the mean drop of each method.
pub fn drop_curves(rows: &[TraceRow]) -> String {
    let ms = methods(rows);
    let kmax = rows.iter().map(|r| r.k).max().unwrap_or(0);
    let mut s = String::from("# k");
    for m in &ms {
        let _ = write!(s, " {m}");
    }
    s.push('\n');
    for k in 1..=kmax {
        let _ = write!(s, "{k}");
        for m in &ms {
            let vals: Vec<f64> = rows.iter().filter(|r| &r.method == m && r.k == k).map(|r| r.drop).collect();
            if vals.is_empty() {
                s.push_str(" NaN");
            } else {
                let _ = write!(s, " {}", vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        s.push('\n');
    }
    s
}
