use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::HduvaModel;
use crate::parallel::chunk_seed;
use crate::training::DomainSet;

/// Posterior topic means of sampled instances, projected onto a triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicPlot {
    pub domains: Vec<String>,
    /// `(domain index, simplex point, 2-D position)`
    pub points: Vec<(usize, [f64; 3], [f64; 2])>,
    pub silhouette: f64,
    pub svg: String,
}

const VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.866_025_403_784_438_6]];
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub fn barycentric(p: [f64; 3]) -> [f64; 2] {
    let x = p[0] * VERTICES[0][0] + p[1] * VERTICES[1][0] + p[2] * VERTICES[2][0];
    let y = p[0] * VERTICES[0][1] + p[1] * VERTICES[1][1] + p[2] * VERTICES[2][1];
    [x, y]
}

/// Mean silhouette coefficient with Euclidean distance. Points in singleton
/// clusters score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::arg("silhouette: points and labels must be non-empty and aligned"));
    }
    let k = labels.iter().copied().max().expect("non-empty") + 1;
    if (0..k).filter(|c| labels.contains(c)).count() < 2 {
        return Err(Error::arg("silhouette needs at least two clusters"));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += dist(p, q);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        total += if m > 0.0 { (b - a) / m } else { 0.0 };
    }
    Ok(total / points.len() as f64)
}

/// Sample up to `per_domain` instances of each domain (seeded), compute
/// posterior topic means and render a barycentric scatter as SVG. With
/// `K != 3` the first three coordinates are renormalized.
pub fn plot_topics(model: &HduvaModel, domains: &[DomainSet], per_domain: usize, seed: u64) -> Result<TopicPlot> {
    if domains.len() < 2 {
        return Err(Error::arg("topic plot needs at least two domains"));
    }
    let k = model.config().topic_dim;
    if k != 3 {
        log::warn!("topic dimension is {k}; plotting the first three coordinates renormalized");
    }
    if k < 3 {
        return Err(Error::arg("topic plot needs a topic dimension of at least 3"));
    }
    let mut points = Vec::new();
    let mut full = Vec::new();
    let mut labels = Vec::new();
    for (d, set) in domains.iter().enumerate() {
        let n = per_domain.min(set.len());
        let mut idx = index::sample(&mut ChaCha8Rng::seed_from_u64(chunk_seed(seed, d as u64)), set.len(), n).into_vec();
        idx.sort_unstable();
        for chunk in idx.chunks(64) {
            let (x, _) = set.batch(chunk)?;
            for m in model.topic_means(&x)? {
                let s: f64 = m[..3].iter().sum();
                let p = [m[0] / s, m[1] / s, m[2] / s];
                points.push((d, p, barycentric(p)));
                full.push(m);
                labels.push(d);
            }
        }
    }
    let silhouette = silhouette(&full, &labels)?;
    let names: Vec<String> = domains.iter().map(|d| d.name.clone()).collect();
    let svg = render_svg(&names, &points, silhouette);
    Ok(TopicPlot {
        domains: names,
        points,
        silhouette,
        svg,
    })
}

fn render_svg(names: &[String], points: &[(usize, [f64; 3], [f64; 2])], silhouette: f64) -> String {
    let (w, h, pad) = (420.0, 400.0, 30.0);
    let scale = w - 2.0 * pad;
    let tx = |p: [f64; 2]| (pad + p[0] * scale, h - pad - 30.0 - p[1] * scale);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let tri: Vec<String> = VERTICES
        .iter()
        .map(|&v| {
            let (x, y) = tx(v);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(s, r#"<polygon points="{}" fill="none" stroke="black"/>"#, tri.join(" "));
    for (d, _, p) in points {
        let (x, y) = tx(*p);
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{}" fill-opacity="0.6"/>"#,
            COLORS[d % COLORS.len()]
        );
    }
    for (i, name) in names.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">{name}</text>"#,
            pad + 80.0 * i as f64,
            h - 12.0,
            COLORS[i % COLORS.len()]
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="12">silhouette {silhouette:.4}</text>"#, pad);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouette_of_separated_clusters_is_near_one() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.98);
        let mixed = silhouette(&pts, &[0, 1, 0, 1]).unwrap();
        assert!(mixed < 0.0);
        assert!(silhouette(&pts, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn projection_stays_in_triangle() {
        for p in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [0.0, 0.0, 1.0]] {
            let [x, y] = barycentric(p);
            assert!(y >= -1e-12);
            assert!(y <= 3f64.sqrt() * x + 1e-12);
            assert!(y <= 3f64.sqrt() * (1.0 - x) + 1e-12);
        }
    }
}
