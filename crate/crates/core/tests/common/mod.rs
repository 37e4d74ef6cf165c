//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use netcomm::topology::{graph_stats, SocialNetwork, TopologyKind, TopologySpec};

/// Checks every structural invariant of a generated network against `spec`,
/// recomputing the summary statistics by brute force.
pub fn check_network(spec: &TopologySpec, net: &SocialNetwork) -> Result<(), String> {
    let n = spec.n_agents;
    if net.n() != n {
        return Err(format!("n = {} but spec asks for {n}", net.n()));
    }
    for &(a, b) in net.edges() {
        if a >= b || b >= n {
            return Err(format!("edge ({a}, {b}) is not canonical"));
        }
    }
    let mut degree_sum = 0;
    for v in 0..n {
        let nb = net.neighbors(v);
        if nb.is_empty() {
            return Err(format!("node {v} is isolated"));
        }
        if nb.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("neighbors of {v} not sorted and unique"));
        }
        for &u in nb {
            if u == v {
                return Err(format!("self-loop at {v}"));
            }
            if !net.neighbors(u).contains(&v) || !net.are_adjacent(u, v) {
                return Err(format!("asymmetric adjacency {v}-{u}"));
            }
            if !net.edges().contains(&(v.min(u), v.max(u))) {
                return Err(format!("adjacency {v}-{u} missing from edge set"));
            }
        }
        degree_sum += net.degree(v);
    }
    if degree_sum != 2 * net.edges().len() {
        return Err("degree sum differs from twice the edge count".into());
    }

    let ring: BTreeSet<(usize, usize)> =
        (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
    match spec.kind {
        TopologyKind::Ring if *net.edges() != ring => return Err("ring edges wrong".into()),
        TopologyKind::Clique if net.edges().len() != n * (n - 1) / 2 => {
            return Err("clique is not complete".into())
        }
        TopologyKind::SmallWorld if !ring.is_subset(net.edges()) => {
            return Err("small-world graph does not contain the ring".into())
        }
        _ => {}
    }

    let stats = graph_stats(net);
    let degrees: Vec<f64> = (0..n)
        .map(|v| (0..n).filter(|&u| u != v && net.are_adjacent(u, v)).count() as f64)
        .collect();
    let mean = degrees.iter().sum::<f64>() / n as f64;
    let var = degrees.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    let global = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| net.are_adjacent(a, b) && (b - a).min(n - (b - a)) > 1)
        .count();
    if (stats.avg_degree - mean).abs() > 1e-12 {
        return Err(format!("avg degree {} vs {mean}", stats.avg_degree));
    }
    if (stats.degree_variance - var).abs() > 1e-12 {
        return Err(format!("degree variance {} vs {var}", stats.degree_variance));
    }
    if stats.n_global_edges != global {
        return Err(format!("global edges {} vs {global}", stats.n_global_edges));
    }
    let reparsed = SocialNetwork::parse_edge_list(&net.to_edge_list()).map_err(|e| e.to_string())?;
    if reparsed != *net {
        return Err("edge list round trip changed the network".into());
    }
    Ok(())
}

/// Natural-log Jensen-Shannon divergence, converted to bits.
pub fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            total += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            total += 0.5 * b * (b / m).ln();
        }
    }
    total / std::f64::consts::LN_2
}

/// OLS coefficients from the normal equations `X'X b = X'y`, solved by
/// Gauss-Jordan elimination with partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * yi;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, p) in a[r].iter_mut().zip(pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    a.iter().map(|r| r[k]).collect()
}
