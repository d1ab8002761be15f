//! Discretized coverage domain with per-cell stochastic quantities and clarity.
//!
//! Cells are indexed row-major with axis 0 varying fastest, so in the planar
//! case `index = iy * nx + ix` and the centre of cell `(ix, iy)` is
//! `((ix + 0.5) h, (iy + 0.5) h)`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clarity::{self, ClarityParams};
use crate::error::{invalid, Error, Result};

/// Rectangular domain `[0, L_1] × … × [0, L_s]` split into square cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    lengths: Vec<f64>,
    cell_size: f64,
    cells_per_axis: Vec<usize>,
}

impl DomainSpec {
    pub fn new(lengths: Vec<f64>, cell_size: f64) -> Result<Self> {
        if lengths.is_empty() {
            return Err(invalid("domain needs at least one axis"));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(invalid(format!("cell size must be positive, got {cell_size}")));
        }
        let mut cells_per_axis = Vec::with_capacity(lengths.len());
        for (axis, &len) in lengths.iter().enumerate() {
            if !(len > 0.0) || !len.is_finite() {
                return Err(invalid(format!(
                    "domain length on axis {axis} must be positive, got {len}"
                )));
            }
            let n = (len / cell_size).round();
            if n < 1.0 || (n * cell_size - len).abs() > 1e-9 * len.max(1.0) {
                return Err(invalid(format!(
                    "domain length {len} on axis {axis} is not a multiple of cell size {cell_size}"
                )));
            }
            cells_per_axis.push(n as usize);
        }
        Ok(Self {
            lengths,
            cell_size,
            cells_per_axis,
        })
    }

    /// Planar `lx × ly` domain.
    pub fn planar(lx: f64, ly: f64, cell_size: f64) -> Result<Self> {
        Self::new(vec![lx, ly], cell_size)
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    /// Cell size `V` (area in 2-D).
    pub fn cell_volume(&self) -> f64 {
        self.cell_size.powi(self.dims() as i32)
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Per-axis integer coordinates of a cell.
    pub fn cell_coords(&self, index: usize) -> Vec<usize> {
        let mut rem = index;
        self.cells_per_axis
            .iter()
            .map(|&n| {
                let c = rem % n;
                rem /= n;
                c
            })
            .collect()
    }

    pub fn cell_center(&self, index: usize) -> Vec<f64> {
        self.cell_coords(index)
            .into_iter()
            .map(|c| (c as f64 + 0.5) * self.cell_size)
            .collect()
    }

    /// Every cell centre, in index order.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.num_cells()).map(|c| self.cell_center(c)).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().zip(&self.lengths).all(|(&p, &l)| (0.0..=l).contains(&p))
    }
}

/// Disc-shaped downward camera footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub footprint_radius: f64,
}

impl SensorModel {
    pub fn new(footprint_radius: f64) -> Result<Self> {
        if !(footprint_radius >= 0.0) || !footprint_radius.is_finite() {
            return Err(invalid(format!(
                "footprint radius must be non-negative, got {footprint_radius}"
            )));
        }
        Ok(Self { footprint_radius })
    }
}

/// Cells whose centres lie within the footprint radius of `position`
/// (projected onto the domain axes), in ascending index order.
pub fn sensor_footprint(position: &[f64], spec: &DomainSpec, sensor: &SensorModel) -> Vec<usize> {
    let dims = spec.dims();
    let r = sensor.footprint_radius;
    let h = spec.cell_size();
    let n = spec.cells_per_axis();
    // Candidate index range per axis: centres (i + 0.5) h within [p - r, p + r].
    let mut lo = Vec::with_capacity(dims);
    let mut hi = Vec::with_capacity(dims);
    for (axis, &count) in n.iter().enumerate() {
        let p = position.get(axis).copied().unwrap_or(0.0);
        let a = ((p - r) / h - 0.5).ceil().max(0.0);
        let b = ((p + r) / h - 0.5).floor().min(count as f64 - 1.0);
        if !(a <= b) {
            return Vec::new();
        }
        lo.push(a as usize);
        hi.push(b as usize);
    }
    let r2 = r * r;
    let mut out = Vec::new();
    let mut idx = lo.clone();
    loop {
        let mut d2 = 0.0;
        let mut flat = 0;
        let mut stride = 1;
        for axis in 0..dims {
            let c = (idx[axis] as f64 + 0.5) * h;
            let p = position.get(axis).copied().unwrap_or(0.0);
            d2 += (c - p) * (c - p);
            flat += idx[axis] * stride;
            stride *= n[axis];
        }
        if d2 <= r2 {
            out.push(flat);
        }
        // odometer, axis 0 fastest, so `flat` is visited in ascending order
        let mut axis = 0;
        loop {
            if axis == dims {
                return out;
            }
            if idx[axis] < hi[axis] {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo[axis];
            axis += 1;
        }
    }
}

/// Per-cell truth, noise and clarity state.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub spec: DomainSpec,
    /// Quantity of interest `m_c`.
    pub values: Vec<f64>,
    /// Process-noise variance rate `Q_c`.
    pub process_noise: Vec<f64>,
    pub clarity: Vec<f64>,
    pub target_clarity: Vec<f64>,
    /// Shared measurement-noise variance `R`.
    pub measurement_noise: f64,
    /// Sensing gain applied to cells inside the footprint.
    pub sensing_gain: f64,
}

impl CellField {
    /// Checks array lengths, parameter ranges and that each target lies
    /// strictly below the cell's maximum attainable clarity.
    pub fn validate(&self) -> Result<()> {
        let n = self.spec.num_cells();
        for (name, len) in [
            ("values", self.values.len()),
            ("process_noise", self.process_noise.len()),
            ("clarity", self.clarity.len()),
            ("target_clarity", self.target_clarity.len()),
        ] {
            if len != n {
                return Err(invalid(format!("{name} has {len} entries, domain has {n} cells")));
            }
        }
        for c in 0..n {
            let p = self.params(c).map_err(|e| invalid(format!("cell {c}: {e}")))?;
            let q = self.clarity[c];
            if !(0.0..=1.0).contains(&q) {
                return Err(invalid(format!("cell {c}: clarity {q} outside [0, 1]")));
            }
            let target = self.target_clarity[c];
            let q_max = clarity::max_clarity_unchecked(&p);
            if !(target >= 0.0) || target >= q_max {
                return Err(invalid(format!(
                    "cell {c}: target clarity {target} must be in [0, q_max = {q_max})"
                )));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.clarity.len()
    }

    /// Clarity parameters of cell `c` while it is in view.
    pub fn params(&self, c: usize) -> Result<ClarityParams> {
        ClarityParams::new(self.sensing_gain, self.process_noise[c], self.measurement_noise)
    }

    fn params_unchecked(&self, c: usize, gain: f64) -> ClarityParams {
        ClarityParams {
            sensing_gain: gain,
            process_noise: self.process_noise[c],
            measurement_noise: self.measurement_noise,
        }
    }

    pub fn max_clarity(&self, c: usize) -> f64 {
        clarity::max_clarity_unchecked(&self.params_unchecked(c, self.sensing_gain))
    }

    /// Euler–Maruyama step of the independent random walks `m_c' = w_c`.
    ///
    /// Draws exactly one standard normal per cell in index order, including
    /// cells with zero noise, so the random stream does not depend on the map.
    pub fn step_environment<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(invalid(format!("dt must be non-negative, got {dt}")));
        }
        for (m, &q) in self.values.iter_mut().zip(&self.process_noise) {
            let z: f64 = StandardNormal.sample(rng);
            *m += (q * dt).sqrt() * z;
        }
        Ok(())
    }

    /// Advance every cell's clarity by `dt` with the exact solution: observed
    /// cells with the sensing gain, all others with zero gain.
    ///
    /// `observed` must be sorted ascending (as produced by [`sensor_footprint`]).
    pub fn update_clarity(&mut self, observed: &[usize], dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        let mut next_obs = observed.iter().peekable();
        for c in 0..self.clarity.len() {
            let seen = next_obs.peek().is_some_and(|&&o| o == c);
            if seen {
                next_obs.next();
            }
            let gain = if seen { self.sensing_gain } else { 0.0 };
            let p = self.params_unchecked(c, gain);
            self.clarity[c] = clarity::closed_form_unchecked(dt, self.clarity[c], &p);
        }
        Ok(())
    }

    /// Noisy outputs `y_c = m_c + v_c` for the observed cells, one normal
    /// draw per observed cell in the given order.
    pub fn measure<R: Rng + ?Sized>(&self, observed: &[usize], rng: &mut R) -> Vec<(usize, f64)> {
        let sd = self.measurement_noise.sqrt();
        observed
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(rng);
                (c, self.values[c] + sd * z)
            })
            .collect()
    }

    /// Per-cell `max(0, q̄_c − q_c)`.
    pub fn deficits(&self) -> Vec<f64> {
        self.target_clarity
            .iter()
            .zip(&self.clarity)
            .map(|(&t, &q)| (t - q).max(0.0))
            .collect()
    }

    /// CSV snapshot with columns `cell_index,x_center,y_center,m,Q,q,q_target`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_index,x_center,y_center,m,Q,q,q_target\n");
        for c in 0..self.num_cells() {
            let center = self.spec.cell_center(c);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c,
                center[0],
                center.get(1).copied().unwrap_or(0.0),
                self.values[c],
                self.process_noise[c],
                self.clarity[c],
                self.target_clarity[c]
            );
        }
        out
    }
}

/// How per-cell targets are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetRule {
    /// `q̄_c = fraction · q∞,c`.
    FractionOfMax(f64),
    /// The same target everywhere; must be below every cell's `q∞`.
    Uniform(f64),
}

/// Synthetic environment: high-noise discs on a low-noise background.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentModel {
    pub background_noise: f64,
    pub patch_noise: f64,
    pub patch_count: usize,
    pub patch_radius: f64,
    pub mean_value: f64,
    pub value_spread: f64,
    pub measurement_noise: f64,
    pub sensing_gain: f64,
    pub initial_clarity: f64,
    pub target: TargetRule,
}

impl EnvironmentModel {
    /// Builds the field. Random draws, in order: patch centres (one uniform
    /// per axis per patch), then one standard normal per cell for `m_c`.
    pub fn generate<R: Rng + ?Sized>(&self, spec: &DomainSpec, rng: &mut R) -> Result<CellField> {
        if !(self.background_noise >= 0.0 && self.patch_noise >= 0.0) {
            return Err(invalid("process noise levels must be non-negative"));
        }
        let patches: Vec<Vec<f64>> = (0..self.patch_count)
            .map(|_| spec.lengths().iter().map(|&l| rng.random::<f64>() * l).collect())
            .collect();
        let n = spec.num_cells();
        let mut process_noise = vec![self.background_noise; n];
        for (c, q) in process_noise.iter_mut().enumerate() {
            let center = spec.cell_center(c);
            let inside = patches.iter().any(|p| {
                p.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    <= self.patch_radius * self.patch_radius
            });
            if inside {
                *q = self.patch_noise;
            }
        }
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.mean_value + self.value_spread * z
            })
            .collect();
        let mut field = CellField {
            spec: spec.clone(),
            values,
            process_noise,
            clarity: vec![self.initial_clarity; n],
            target_clarity: vec![0.0; n],
            measurement_noise: self.measurement_noise,
            sensing_gain: self.sensing_gain,
        };
        for c in 0..n {
            field.target_clarity[c] = match self.target {
                TargetRule::FractionOfMax(f) => f * field.max_clarity(c),
                TargetRule::Uniform(v) => v,
            };
        }
        field.validate().map_err(|e| match e {
            Error::InvalidParameter(m) => Error::Config(format!("environment: {m}")),
            other => other,
        })?;
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field(spec: DomainSpec, q: f64, clarity: f64) -> CellField {
        let n = spec.num_cells();
        CellField {
            spec,
            values: vec![0.0; n],
            process_noise: vec![q; n],
            clarity: vec![clarity; n],
            target_clarity: vec![0.0; n],
            measurement_noise: 1.0,
            sensing_gain: 1.0,
        }
    }

    fn brute_footprint(p: &[f64], spec: &DomainSpec, r: f64) -> Vec<usize> {
        (0..spec.num_cells())
            .filter(|&c| {
                let ctr = spec.cell_center(c);
                ctr.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r * r
            })
            .collect()
    }

    #[test]
    fn domain_rejects_non_multiple() {
        assert!(DomainSpec::planar(2.0, 2.05, 0.2).is_err());
        assert!(DomainSpec::planar(2.0, 2.0, 0.0).is_err());
        let d = DomainSpec::planar(20.0, 20.0, 0.2).unwrap();
        assert_eq!(d.num_cells(), 10_000);
    }

    #[test]
    fn cell_indexing_is_row_major() {
        let d = DomainSpec::planar(2.0, 1.0, 0.5).unwrap();
        assert_eq!(d.cells_per_axis(), &[4, 2]);
        assert_eq!(d.cell_center(5), vec![0.75, 0.75]);
        assert_eq!(d.cell_coords(7), vec![3, 1]);
    }

    #[test]
    fn footprint_examples() {
        let d = DomainSpec::planar(2.0, 2.0, 0.2).unwrap();
        let h = 0.2;
        let c = 4 * 10 + 5;
        let ctr = d.cell_center(c);
        let s = SensorModel::new(0.4 * h).unwrap();
        assert_eq!(sensor_footprint(&ctr, &d, &s), vec![c]);

        let s = SensorModel::new(0.3).unwrap();
        assert!(sensor_footprint(&[-0.6, 1.0], &d, &s).is_empty());

        let s = SensorModel::new(1.5 * h).unwrap();
        let got = sensor_footprint(&ctr, &d, &s);
        // diagonal centres sit at √2 h < 1.5 h, so the whole 3x3 block is in
        assert_eq!(got.len(), 9);
        assert_eq!(got, brute_footprint(&ctr, &d, 1.5 * h));

        let s = SensorModel::new(1.3 * h).unwrap();
        assert_eq!(sensor_footprint(&ctr, &d, &s), vec![c - 10, c - 1, c, c + 1, c + 10]);
    }

    #[test]
    fn footprint_matches_brute_force() {
        let d = DomainSpec::planar(2.0, 1.4, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = [rng.random::<f64>() * 3.0 - 0.5, rng.random::<f64>() * 2.4 - 0.5];
            let r = rng.random::<f64>() * 0.7;
            let s = SensorModel::new(r).unwrap();
            assert_eq!(sensor_footprint(&p, &d, &s), brute_footprint(&p, &d, r));
        }
    }

    #[test]
    fn environment_step_trivial_cases() {
        let d = DomainSpec::planar(1.0, 1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = field(d.clone(), 0.0, 0.0);
        f.values = vec![1.0, 2.0, 3.0, 4.0];
        f.step_environment(0.3, &mut rng).unwrap();
        assert_eq!(f.values, vec![1.0, 2.0, 3.0, 4.0]);
        let mut f = field(d, 1.0, 0.0);
        f.step_environment(0.0, &mut rng).unwrap();
        assert_eq!(f.values, vec![0.0; 4]);
        assert!(f.step_environment(-1.0, &mut rng).is_err());
    }

    #[test]
    fn environment_step_variance_monte_carlo() {
        let d = DomainSpec::new(vec![1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let mut f = field(d.clone(), 1.0, 0.0);
                f.step_environment(0.1, &mut rng).unwrap();
                f.values[0]
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.1).abs() < 0.005, "variance {var}");
    }

    #[test]
    fn clarity_update_examples() {
        let d = DomainSpec::planar(1.0, 1.0, 0.5).unwrap();
        let mut f = field(d.clone(), 1.0, 0.5);
        f.update_clarity(&[0, 1, 2, 3], 0.7).unwrap();
        for q in &f.clarity {
            assert_abs_diff_eq!(*q, 0.5, epsilon = 1e-9);
        }

        let mut f = field(d.clone(), 0.0, 0.3);
        f.update_clarity(&[], 5.0).unwrap();
        assert_eq!(f.clarity, vec![0.3; 4]);

        let mut f = field(d, 1.0, 0.0);
        f.update_clarity(&[2], std::f64::consts::LN_2 / 2.0).unwrap();
        assert_abs_diff_eq!(f.clarity[2], 0.25, epsilon = 1e-12);
        assert_eq!(f.clarity[0], 0.0);
    }

    #[test]
    fn clarity_update_subdivides_exactly() {
        let d = DomainSpec::planar(1.0, 1.0, 0.5).unwrap();
        let mut a = field(d, 0.3, 0.1);
        a.clarity = vec![0.1, 0.4, 0.7, 0.95];
        let mut b = a.clone();
        a.update_clarity(&[1, 3], 0.4).unwrap();
        b.update_clarity(&[1, 3], 0.2).unwrap();
        b.update_clarity(&[1, 3], 0.2).unwrap();
        for (x, y) in a.clarity.iter().zip(&b.clarity) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-9);
        }
    }

    #[test]
    fn measure_examples() {
        let d = DomainSpec::new(vec![1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = field(d, 0.0, 0.0);
        f.values = vec![2.0];
        assert!(f.measure(&[], &mut rng).is_empty());

        f.measurement_noise = 1e-12;
        let y = f.measure(&[0], &mut rng);
        assert_abs_diff_eq!(y[0].1, 2.0, epsilon = 1e-5);

        f.measurement_noise = 0.25;
        let n = 10_000;
        let ys: Vec<f64> = (0..n).map(|_| f.measure(&[0], &mut rng)[0].1).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
        assert!((var - 0.25).abs() < 0.0125, "variance {var}");
    }

    #[test]
    fn generator_rejects_unreachable_targets() {
        let d = DomainSpec::planar(2.0, 2.0, 0.2).unwrap();
        let mut model = EnvironmentModel {
            background_noise: 0.01,
            patch_noise: 1.0,
            patch_count: 2,
            patch_radius: 0.5,
            mean_value: 35.0,
            value_spread: 1.0,
            measurement_noise: 1.0,
            sensing_gain: 1.0,
            initial_clarity: 0.0,
            target: TargetRule::Uniform(0.6),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = model.generate(&d, &mut rng).unwrap_err().to_string();
        assert!(err.contains("cell"), "{err}");
        model.target = TargetRule::FractionOfMax(0.8);
        let f = model.generate(&d, &mut rng).unwrap();
        assert!(f.process_noise.contains(&1.0));
        assert!(f.process_noise.contains(&0.01));
    }

    #[test]
    fn csv_snapshot_header_and_rows() {
        let d = DomainSpec::planar(1.0, 1.0, 0.5).unwrap();
        let f = field(d, 0.0, 0.0);
        let csv = f.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "cell_index,x_center,y_center,m,Q,q,q_target");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,0.75,0.25,0,0,0,0");
    }
}
