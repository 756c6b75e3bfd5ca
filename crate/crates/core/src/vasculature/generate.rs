//! Seeded arterio-venous network generator.
//!
//! An arterial binary tree fans out from a single feeding arteriole on the
//! left, a mirrored venous tree drains to the right, and jittered capillaries
//! with occasional cross-links join matching leaves. Radii follow a truncated
//! power law on `[r_min, r_max]` whose exponent reproduces a target mean, and
//! are handed out largest-first from the roots towards the capillary bed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BcKind, BoundaryCondition, Segment, VesselNetwork};
use crate::error::{Error, Result};

/// `int_{ua}^{ub} exp(c u) du`
fn int_exp(c: f64, ua: f64, ub: f64) -> f64 {
    if c.abs() < 1e-12 {
        ub - ua
    } else {
        ((c * ub).exp() - (c * ua).exp()) / c
    }
}

fn power_law_mean(alpha: f64, lo: f64, hi: f64) -> f64 {
    let (ua, ub) = (lo.ln(), hi.ln());
    int_exp(2.0 - alpha, ua, ub) / int_exp(1.0 - alpha, ua, ub)
}

/// Exponent `alpha` of the density `r^-alpha` on `[lo, hi]` with the given mean.
pub fn power_law_exponent_for_mean(lo: f64, hi: f64, mean: f64) -> Result<f64> {
    if !(0.0 < lo && lo < mean && mean < hi) {
        return Err(Error::config(format!(
            "mean radius {mean} must lie strictly inside [{lo}, {hi}]"
        )));
    }
    // the mean decreases monotonically with alpha
    let (mut a, mut b) = (-20.0, 20.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if power_law_mean(m, lo, hi) > mean {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Inverse CDF of the truncated power law.
pub fn power_law_quantile(alpha: f64, lo: f64, hi: f64, q: f64) -> f64 {
    let (ua, ub) = (lo.ln(), hi.ln());
    let c = 1.0 - alpha;
    let u = if c.abs() < 1e-12 {
        ua + q * (ub - ua)
    } else {
        let ea = (c * ua).exp();
        let eb = (c * ub).exp();
        (ea + q * (eb - ea)).ln() / c
    };
    u.exp().clamp(lo, hi)
}

/// Parameters of the synthetic network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub extent: [f64; 2],
    /// Depth of the arterial and venous binary trees.
    pub generations: usize,
    /// Intermediate nodes along each capillary.
    pub capillary_nodes: usize,
    /// Probability of a cross-link between neighbouring capillaries at each
    /// intermediate node.
    pub anastomosis_probability: f64,
    /// Fraction of the x-extent occupied by each tree.
    pub tree_fraction: f64,
    /// Node jitter as a fraction of the local spacing.
    pub jitter: f64,
    pub radius_range: [f64; 2],
    pub mean_radius: f64,
    pub seed: u64,
    pub inlet_pressure: f64,
    pub outlet_pressure: f64,
    pub inlet_concentration: f64,
    /// Segments whose midpoint lies inside this disc are collapsed.
    pub collapsed_core: Option<([f64; 2], f64)>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            extent: [2.7e-3, 3.5e-3],
            generations: 5,
            capillary_nodes: 3,
            anastomosis_probability: 0.3,
            tree_fraction: 0.3,
            jitter: 0.25,
            radius_range: [1.6e-6, 30e-6],
            mean_radius: 6.98e-6,
            seed: 7,
            inlet_pressure: 4000.0,
            outlet_pressure: 2000.0,
            inlet_concentration: 2e-3,
            collapsed_core: None,
        }
    }
}

impl NetworkSpec {
    fn check(&self) -> Result<()> {
        let [lx, ly] = self.extent;
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::config("network extent must be positive"));
        }
        if self.generations == 0 || self.generations > 12 {
            return Err(Error::config("network generations must lie in 1..=12"));
        }
        if !(0.0..0.5).contains(&self.tree_fraction) || self.tree_fraction == 0.0 {
            return Err(Error::config("tree_fraction must lie in (0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&self.anastomosis_probability) {
            return Err(Error::config("anastomosis probability must lie in [0, 1]"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::config("jitter must lie in [0, 0.5)"));
        }
        if !(self.inlet_pressure > self.outlet_pressure) {
            return Err(Error::config("inlet pressure must exceed outlet pressure"));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<VesselNetwork> {
        self.check()?;
        let [lo, hi] = self.radius_range;
        let alpha = power_law_exponent_for_mean(lo, hi, self.mean_radius)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let [lx, ly] = self.extent;
        let g_max = self.generations;
        let leaves = 1usize << g_max;
        let x_root = 0.02 * lx;
        let x_leaf = self.tree_fraction * lx;
        let dx_gen = (x_leaf - x_root) / g_max as f64;
        let mut nodes: Vec<[f64; 2]> = Vec::new();
        let mut segments: Vec<(usize, usize, usize)> = Vec::new(); // (a, b, rank)

        // arterial tree; node (g, i) at y = (i + 1/2) ly / 2^g
        let mut art: Vec<Vec<usize>> = Vec::with_capacity(g_max + 1);
        for g in 0..=g_max {
            let count = 1usize << g;
            let dy = ly / count as f64;
            let mut level = Vec::with_capacity(count);
            for i in 0..count {
                let mut x = [x_root + g as f64 * dx_gen, (i as f64 + 0.5) * dy];
                if g > 0 {
                    x[0] += self.jitter * dx_gen * rng.gen_range(-0.5..0.5);
                    x[1] += self.jitter * dy * rng.gen_range(-0.5..0.5);
                }
                nodes.push(x);
                level.push(nodes.len() - 1);
                if g > 0 {
                    segments.push((art[g - 1][i / 2], nodes.len() - 1, g));
                }
            }
            art.push(level);
        }
        // venous tree mirrored in x, flowing towards its root
        let mut ven: Vec<Vec<usize>> = Vec::with_capacity(g_max + 1);
        for g in 0..=g_max {
            let count = 1usize << g;
            let dy = ly / count as f64;
            let mut level = Vec::with_capacity(count);
            for i in 0..count {
                let mut x = [lx - x_root - g as f64 * dx_gen, (i as f64 + 0.5) * dy];
                if g > 0 {
                    x[0] += self.jitter * dx_gen * rng.gen_range(-0.5..0.5);
                    x[1] += self.jitter * dy * rng.gen_range(-0.5..0.5);
                }
                nodes.push(x);
                level.push(nodes.len() - 1);
                if g > 0 {
                    segments.push((nodes.len() - 1, ven[g - 1][i / 2], g));
                }
            }
            ven.push(level);
        }
        // capillaries between matching leaves
        let c = self.capillary_nodes;
        let dy_leaf = ly / leaves as f64;
        let cap_rank = g_max + 1;
        let mut inner: Vec<Vec<usize>> = Vec::with_capacity(leaves);
        for i in 0..leaves {
            let a = nodes[art[g_max][i]];
            let b = nodes[ven[g_max][i]];
            let mut prev = art[g_max][i];
            let mut mids = Vec::with_capacity(c);
            for k in 1..=c {
                let t = k as f64 / (c + 1) as f64;
                let span = (b[0] - a[0]) / (c + 1) as f64;
                let x = [
                    a[0] + t * (b[0] - a[0]) + self.jitter * span * rng.gen_range(-0.5..0.5),
                    a[1] + t * (b[1] - a[1]) + self.jitter * dy_leaf * rng.gen_range(-0.5..0.5),
                ];
                nodes.push([x[0], x[1].clamp(0.0, ly)]);
                let id = nodes.len() - 1;
                segments.push((prev, id, cap_rank));
                mids.push(id);
                prev = id;
            }
            segments.push((prev, ven[g_max][i], cap_rank));
            inner.push(mids);
        }
        for i in 0..leaves.saturating_sub(1) {
            for k in 0..c {
                if rng.gen_bool(self.anastomosis_probability) {
                    segments.push((inner[i][k], inner[i + 1][k], cap_rank));
                }
            }
        }

        // radii: stratified quantiles, largest to the lowest ranks
        let n_seg = segments.len();
        let mut radii: Vec<f64> = (0..n_seg)
            .map(|k| power_law_quantile(alpha, lo, hi, (k as f64 + 0.5) / n_seg as f64))
            .collect();
        radii.sort_by(|a, b| b.total_cmp(a));
        let mut order: Vec<usize> = (0..n_seg).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&k| segments[k].2);
        let mut seg_radius = vec![0.0; n_seg];
        for (r, &k) in radii.iter().zip(&order) {
            seg_radius[k] = *r;
        }

        let mut segs: Vec<Segment> = segments
            .iter()
            .zip(&seg_radius)
            .map(|(&(a, b, _), &radius)| Segment {
                nodes: [a, b],
                radius,
                collapsed: false,
            })
            .collect();
        if let Some((centre, r)) = self.collapsed_core {
            for s in &mut segs {
                let (p, q) = (nodes[s.nodes[0]], nodes[s.nodes[1]]);
                let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                if (mid[0] - centre[0]).hypot(mid[1] - centre[1]) < r {
                    s.collapsed = true;
                }
            }
        }
        let inlet = art[0][0];
        let outlet = ven[0][0];
        let bcs = vec![
            BoundaryCondition {
                node: inlet,
                kind: BcKind::InletPressure,
                value: self.inlet_pressure,
            },
            BoundaryCondition {
                node: inlet,
                kind: BcKind::InletConcentration,
                value: self.inlet_concentration,
            },
            BoundaryCondition {
                node: outlet,
                kind: BcKind::OutletPressure,
                value: self.outlet_pressure,
            },
        ];
        let mut net = VesselNetwork {
            nodes,
            segments: segs,
            bcs,
            viscosity: super::BLOOD_VISCOSITY,
        };
        collapse_floating(&mut net);
        net.validate()?;
        Ok(net)
    }
}

/// Collapse every open component that carries no pressure condition.
fn collapse_floating(net: &mut VesselNetwork) {
    let comp = net.open_components();
    let mut anchored = std::collections::BTreeSet::new();
    for bc in net.bcs.iter().filter(|b| b.kind.is_pressure()) {
        if let Some(c) = comp[bc.node] {
            anchored.insert(c);
        }
    }
    for s in &mut net.segments {
        if let Some(c) = comp[s.nodes[0]] {
            if !s.collapsed && !anchored.contains(&c) {
                s.collapsed = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponent_reproduces_target_mean() {
        let alpha = power_law_exponent_for_mean(1.6e-6, 30e-6, 6.98e-6).unwrap();
        assert_relative_eq!(power_law_mean(alpha, 1.6e-6, 30e-6), 6.98e-6, max_relative = 1e-10);
        // log-uniform (alpha = 1) has mean (b - a) / ln(b / a)
        let lu = (30e-6 - 1.6e-6) / (30.0f64 / 1.6).ln();
        assert_relative_eq!(power_law_mean(1.0, 1.6e-6, 30e-6), lu, max_relative = 1e-12);
        assert!(alpha > 1.0);
    }

    #[test]
    fn quantile_endpoints_and_monotone() {
        let a = 1.4;
        assert_relative_eq!(power_law_quantile(a, 1.6, 30.0, 0.0), 1.6, max_relative = 1e-12);
        assert_relative_eq!(power_law_quantile(a, 1.6, 30.0, 1.0), 30.0, max_relative = 1e-12);
        let mut prev = 0.0;
        for k in 0..=100 {
            let r = power_law_quantile(a, 1.6, 30.0, k as f64 / 100.0);
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = NetworkSpec::default();
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        let other = NetworkSpec {
            seed: 8,
            ..NetworkSpec::default()
        };
        assert_ne!(spec.generate().unwrap(), other.generate().unwrap());
    }

    #[test]
    fn nodes_inside_extent_and_core_collapsed() {
        let spec = NetworkSpec {
            collapsed_core: Some(([1.35e-3, 1.75e-3], 0.4e-3)),
            ..NetworkSpec::default()
        };
        let net = spec.generate().unwrap();
        for x in &net.nodes {
            assert!(x[0] >= 0.0 && x[0] <= spec.extent[0] && x[1] >= 0.0 && x[1] <= spec.extent[1]);
        }
        assert!(net.segments.iter().any(|s| s.collapsed));
        assert!(net.segments.iter().any(|s| !s.collapsed));
        crate::vasculature::solve_network_flow(&net).unwrap();
    }
}
