//! Piecewise-smooth distributional signals: smooth segments plus Dirac
//! impulse records at segment boundaries.

use crate::error::{Error, Result};
use crate::linalg::{expm, Mat, Vector};

/// Impulsive part `sum_j coeffs[j] * delta_t^(j)` of a signal at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseRecord {
    pub time: f64,
    pub dim: usize,
    pub coeffs: Vec<Vector>,
}

impl ImpulseRecord {
    /// Trailing all-zero coefficient vectors are dropped.
    pub fn new(time: f64, dim: usize, mut coeffs: Vec<Vector>) -> Self {
        while coeffs.last().is_some_and(|c| c.iter().all(|v| *v == 0.0)) {
            coeffs.pop();
        }
        ImpulseRecord { time, dim, coeffs }
    }

    pub fn empty(time: f64, dim: usize) -> Self {
        ImpulseRecord { time, dim, coeffs: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn order_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, order: usize) -> Vector {
        self.coeffs
            .get(order)
            .cloned()
            .unwrap_or_else(|| Vector::zeros(self.dim))
    }

    /// `(eta^0 / eta^1 / ... )` zero-padded to `blocks` coefficient vectors.
    pub fn stacked(&self, blocks: usize) -> Result<Vector> {
        if self.coeffs.len() > blocks {
            return Err(Error::Dimension(format!(
                "impulse of order {} does not fit {} blocks",
                self.coeffs.len(),
                blocks
            )));
        }
        let mut out = Vector::zeros(blocks * self.dim);
        for (j, c) in self.coeffs.iter().enumerate() {
            out.rows_mut(j * self.dim, self.dim).copy_from(c);
        }
        Ok(out)
    }

    /// Linear combination of records at the same time, padding with zeros.
    pub fn combine(time: f64, dim: usize, terms: &[(f64, &ImpulseRecord)]) -> ImpulseRecord {
        let len = terms.iter().map(|(_, r)| r.coeffs.len()).max().unwrap_or(0);
        let coeffs = (0..len)
            .map(|j| {
                terms
                    .iter()
                    .fold(Vector::zeros(dim), |acc, (w, r)| acc + r.coeff(j) * *w)
            })
            .collect();
        ImpulseRecord::new(time, dim, coeffs)
    }

    pub fn approx_eq(&self, other: &ImpulseRecord, tol: f64) -> bool {
        if self.dim != other.dim || (self.time - other.time).abs() > tol {
            return false;
        }
        let len = self.coeffs.len().max(other.coeffs.len());
        (0..len).all(|j| (self.coeff(j) - other.coeff(j)).amax() <= tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.amax()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub enum SegmentKind {
    /// `map * exp(generator * (t - anchor_time)) * anchor`.
    Flow { generator: Mat, map: Mat, anchor_time: f64, anchor: Vector },
    /// Samples on a grid, evaluated by local cubic interpolation.
    Sampled { times: Vec<f64>, values: Vec<Vector> },
    /// Pointwise linear combination of segments covering the same interval.
    Combination(Vec<(f64, Segment)>),
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub dim: usize,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn flow(start: f64, end: f64, generator: Mat, map: Mat, anchor_time: f64, anchor: Vector) -> Self {
        let dim = map.nrows();
        Segment { start, end, dim, kind: SegmentKind::Flow { generator, map, anchor_time, anchor } }
    }

    pub fn constant(start: f64, end: f64, value: Vector) -> Self {
        let d = value.len();
        Segment::flow(start, end, Mat::zeros(d, d), Mat::identity(d, d), start, value)
    }

    pub fn sampled(start: f64, end: f64, times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Dimension(format!(
                "sampled segment needs >= 2 matching samples, got {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sample times must increase strictly".into()));
        }
        if times[0] > start || *times.last().unwrap() < end {
            return Err(Error::Config("samples must cover the segment".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("sample vectors differ in length".into()));
        }
        Ok(Segment { start, end, dim, kind: SegmentKind::Sampled { times, values } })
    }

    pub fn eval(&self, t: f64) -> Vector {
        self.derivative(t, 0)
    }

    /// `order`-th time derivative of the smooth signal at `t`.
    pub fn derivative(&self, t: f64, order: usize) -> Vector {
        match &self.kind {
            SegmentKind::Flow { generator, map, anchor_time, anchor } => {
                let flow = expm(generator, t - anchor_time).expect("finite flow");
                let mut v = flow * anchor;
                for _ in 0..order {
                    v = generator * v;
                }
                map * v
            }
            SegmentKind::Sampled { times, values } => cubic_eval(times, values, t, order),
            SegmentKind::Combination(terms) => terms
                .iter()
                .fold(Vector::zeros(self.dim), |acc, (w, s)| acc + s.derivative(t, order) * *w),
        }
    }

    /// Time derivatives of orders `0..=upto` at `t`.
    pub fn derivatives(&self, t: f64, upto: usize) -> Vec<Vector> {
        match &self.kind {
            SegmentKind::Flow { generator, map, anchor_time, anchor } => {
                let flow = expm(generator, t - anchor_time).expect("finite flow");
                let mut v = flow * anchor;
                let mut out = Vec::with_capacity(upto + 1);
                for k in 0..=upto {
                    if k > 0 {
                        v = generator * v;
                    }
                    out.push(map * &v);
                }
                out
            }
            SegmentKind::Sampled { times, values } => {
                (0..=upto).map(|k| cubic_eval(times, values, t, k)).collect()
            }
            SegmentKind::Combination(terms) => {
                let mut out = vec![Vector::zeros(self.dim); upto + 1];
                for (w, s) in terms {
                    for (o, d) in out.iter_mut().zip(s.derivatives(t, upto)) {
                        *o += d * *w;
                    }
                }
                out
            }
        }
    }

    fn clipped(&self, start: f64, end: f64) -> Segment {
        let kind = match &self.kind {
            SegmentKind::Combination(terms) => SegmentKind::Combination(
                terms.iter().map(|(w, s)| (*w, s.clipped(start, end))).collect(),
            ),
            k => k.clone(),
        };
        Segment { start, end, dim: self.dim, kind }
    }
}

fn cubic_eval(times: &[f64], values: &[Vector], t: f64, order: usize) -> Vector {
    let n = times.len();
    let dim = values[0].len();
    let i = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    let (lo, hi) = if n >= 4 {
        let lo = i.saturating_sub(1).min(n - 4);
        (lo, lo + 4)
    } else {
        (0, n)
    };
    let origin = times[i];
    let s = t - origin;
    let nodes: Vec<f64> = times[lo..hi].iter().map(|x| x - origin).collect();
    let mut out = Vector::zeros(dim);
    for (j, xj) in nodes.iter().enumerate() {
        // Lagrange basis polynomial in the shifted variable, coefficients ascending.
        let mut poly = vec![1.0];
        let mut denom = 1.0;
        for (m, xm) in nodes.iter().enumerate() {
            if m == j {
                continue;
            }
            let mut next = vec![0.0; poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k] -= c * xm;
                next[k + 1] += c;
            }
            poly = next;
            denom *= xj - xm;
        }
        let mut w = 0.0;
        for (k, c) in poly.iter().enumerate() {
            if k < order {
                continue;
            }
            let fall: f64 = ((k - order + 1)..=k).map(|f| f as f64).product();
            w += c * fall * s.powi((k - order) as i32);
        }
        out += &values[lo + j] * (w / denom);
    }
    out
}

#[derive(Clone, Debug)]
pub enum Event<'a> {
    Impulse(&'a ImpulseRecord),
    Segment(&'a Segment),
}

#[derive(Clone, Debug)]
pub struct PwsTrajectory {
    dim: usize,
    segments: Vec<Segment>,
    impulses: Vec<ImpulseRecord>,
    initial: Option<Vector>,
}

impl PwsTrajectory {
    /// `initial` is the left limit at the start of the domain, when known.
    pub fn new(
        dim: usize,
        segments: Vec<Segment>,
        impulses: Vec<ImpulseRecord>,
        initial: Option<Vector>,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("trajectory needs at least one segment".into()));
        }
        for s in &segments {
            if s.dim != dim {
                return Err(Error::Dimension(format!("segment of dim {} in {dim}-dim trajectory", s.dim)));
            }
            if !(s.start < s.end) {
                return Err(Error::InvalidInterval(s.start, s.end));
            }
        }
        for w in segments.windows(2) {
            if w[0].end != w[1].start {
                return Err(Error::Config(format!(
                    "segments not contiguous at {} / {}",
                    w[0].end, w[1].start
                )));
            }
        }
        let mut impulses: Vec<ImpulseRecord> = impulses.into_iter().filter(|r| !r.is_empty()).collect();
        impulses.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        for r in &impulses {
            if r.dim != dim {
                return Err(Error::Dimension("impulse record dimension".into()));
            }
            if !segments.iter().any(|s| s.start == r.time) {
                return Err(Error::Config(format!(
                    "impulse at {} is not at a segment boundary",
                    r.time
                )));
            }
        }
        if let Some(v) = &initial {
            if v.len() != dim {
                return Err(Error::Dimension("initial value dimension".into()));
            }
        }
        Ok(PwsTrajectory { dim, segments, impulses, initial })
    }

    pub fn constant(start: f64, end: f64, value: Vector) -> Result<Self> {
        let dim = value.len();
        PwsTrajectory::new(dim, vec![Segment::constant(start, end, value.clone())], vec![], Some(value))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments.last().unwrap().end
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn impulses(&self) -> &[ImpulseRecord] {
        &self.impulses
    }

    pub fn initial(&self) -> Option<&Vector> {
        self.initial.as_ref()
    }

    fn out_of_domain(&self, t: f64) -> Error {
        Error::OutOfDomain { t, start: self.start(), end: self.end() }
    }

    /// Segment containing `t` in `[start, end)`.
    pub fn segment_right(&self, t: f64) -> Result<&Segment> {
        let idx = self.segments.partition_point(|s| s.start <= t);
        if idx == 0 || t >= self.end() || !t.is_finite() {
            return Err(self.out_of_domain(t));
        }
        Ok(&self.segments[idx - 1])
    }

    /// Segment containing `t` in `(start, end]`.
    pub fn segment_left(&self, t: f64) -> Result<&Segment> {
        let idx = self.segments.partition_point(|s| s.start < t);
        if idx == 0 || t > self.end() || !t.is_finite() {
            return Err(self.out_of_domain(t));
        }
        Ok(&self.segments[idx - 1])
    }

    pub fn eval_right(&self, t: f64) -> Result<Vector> {
        Ok(self.segment_right(t)?.eval(t))
    }

    pub fn eval_left(&self, t: f64) -> Result<Vector> {
        if t == self.start() {
            return self.initial.clone().ok_or_else(|| self.out_of_domain(t));
        }
        Ok(self.segment_left(t)?.eval(t))
    }

    /// Value of the smooth part at a point where it is continuous.
    pub fn eval(&self, t: f64) -> Result<Vector> {
        self.eval_right(t)
    }

    pub fn impulse_at(&self, t: f64) -> Result<ImpulseRecord> {
        if t < self.start() || t >= self.end() {
            return Err(self.out_of_domain(t));
        }
        Ok(self
            .impulses
            .iter()
            .find(|r| r.time == t)
            .cloned()
            .unwrap_or_else(|| ImpulseRecord::empty(t, self.dim)))
    }

    /// Sub-trajectory on `[a, b)`, keeping impulses with time in `[a, b)`.
    pub fn restrict(&self, a: f64, b: f64) -> Result<PwsTrajectory> {
        if !(a < b) {
            return Err(Error::InvalidInterval(a, b));
        }
        if a < self.start() || b > self.end() {
            return Err(Error::InvalidInterval(a, b));
        }
        let segments: Vec<Segment> = self
            .segments
            .iter()
            .filter(|s| s.end > a && s.start < b)
            .map(|s| s.clipped(s.start.max(a), s.end.min(b)))
            .collect();
        let impulses = self
            .impulses
            .iter()
            .filter(|r| r.time >= a && r.time < b)
            .cloned()
            .collect();
        let initial = if a == self.start() { self.initial.clone() } else { Some(self.eval_left(a)?) };
        PwsTrajectory::new(self.dim, segments, impulses, initial)
    }

    /// Linear combination over the common domain, on the union of all
    /// segment boundaries. Impulses combine coefficient-wise.
    pub fn combine(terms: &[(f64, &PwsTrajectory)]) -> Result<PwsTrajectory> {
        let first = terms.first().ok_or_else(|| Error::Config("empty combination".into()))?.1;
        let dim = first.dim;
        if terms.iter().any(|(_, t)| t.dim != dim) {
            return Err(Error::Dimension("combined trajectories differ in dimension".into()));
        }
        let start = terms.iter().map(|(_, t)| t.start()).fold(f64::NEG_INFINITY, f64::max);
        let end = terms.iter().map(|(_, t)| t.end()).fold(f64::INFINITY, f64::min);
        if !(start < end) {
            return Err(Error::InvalidInterval(start, end));
        }
        let mut cuts: Vec<f64> = vec![start, end];
        for (_, t) in terms {
            for s in &t.segments {
                for x in [s.start, s.end] {
                    if x > start && x < end {
                        cuts.push(x);
                    }
                }
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut segments = Vec::with_capacity(cuts.len() - 1);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let parts = terms
                .iter()
                .map(|(c, t)| Ok((*c, t.segment_right(mid)?.clipped(w[0], w[1]))))
                .collect::<Result<Vec<_>>>()?;
            segments.push(Segment { start: w[0], end: w[1], dim, kind: SegmentKind::Combination(parts) });
        }
        let mut times: Vec<f64> = terms
            .iter()
            .flat_map(|(_, t)| t.impulses.iter().map(|r| r.time))
            .filter(|x| *x >= start && *x < end)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let impulses = times
            .into_iter()
            .map(|tt| {
                let recs: Vec<(f64, ImpulseRecord)> = terms
                    .iter()
                    .map(|(c, t)| (*c, t.impulse_at(tt).unwrap_or_else(|_| ImpulseRecord::empty(tt, dim))))
                    .collect();
                let refs: Vec<(f64, &ImpulseRecord)> = recs.iter().map(|(c, r)| (*c, r)).collect();
                ImpulseRecord::combine(tt, dim, &refs)
            })
            .collect();
        let initial = terms
            .iter()
            .map(|(c, t)| t.eval_left(start).ok().map(|v| v * *c))
            .try_fold(Vector::zeros(dim), |acc, v| v.map(|v| acc + v));
        PwsTrajectory::new(dim, segments, impulses, initial)
    }

    /// Time-ordered stream of impulse and segment events.
    pub fn events(&self) -> impl Iterator<Item = Event<'_>> {
        self.segments.iter().flat_map(move |s| {
            let imp = self.impulses.iter().find(|r| r.time == s.start).map(Event::Impulse);
            imp.into_iter().chain(std::iter::once(Event::Segment(s)))
        })
    }

    /// Pointwise agreement on an interior grid plus impulse agreement.
    pub fn approx_eq(&self, other: &PwsTrajectory, grid_points: usize, tol: f64) -> bool {
        if self.dim != other.dim || self.start() != other.start() || self.end() != other.end() {
            return false;
        }
        let (a, b) = (self.start(), self.end());
        for i in 0..grid_points {
            let t = a + (b - a) * (i as f64 + 0.5) / grid_points as f64;
            match (self.eval(t), other.eval(t)) {
                (Ok(x), Ok(y)) if (&x - &y).amax() <= tol => {}
                _ => return false,
            }
        }
        let mut times: Vec<f64> = self.impulses.iter().chain(other.impulses.iter()).map(|r| r.time).collect();
        times.dedup();
        times.iter().all(|t| match (self.impulse_at(*t), other.impulse_at(*t)) {
            (Ok(x), Ok(y)) => x.approx_eq(&y, tol),
            _ => false,
        })
    }

    /// Largest smooth-part magnitude over a uniform grid (including left limits
    /// at every segment end).
    pub fn sup_norm(&self, samples_per_segment: usize) -> f64 {
        let mut m: f64 = 0.0;
        for s in &self.segments {
            for i in 0..=samples_per_segment {
                let t = s.start + (s.end - s.start) * i as f64 / samples_per_segment as f64;
                m = m.max(s.eval(t).amax());
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    #[test]
    fn constant_trajectory_evaluations() {
        let c = v(&[1.0, -2.0]);
        let tr = PwsTrajectory::constant(0.0, 4.0, c.clone()).unwrap();
        for t in [0.5, 1.0, 3.9] {
            assert_eq!(tr.eval_left(t).unwrap(), c);
            assert_eq!(tr.eval_right(t).unwrap(), c);
            assert!(tr.impulse_at(t).unwrap().is_empty());
        }
        assert!(tr.eval_right(4.0).is_err());
        assert!(tr.eval_left(-0.1).is_err());
        assert!(tr.impulse_at(5.0).is_err());
    }

    #[test]
    fn jump_and_impulse_at_boundary() {
        let s0 = Segment::constant(0.0, 1.0, v(&[3.0]));
        let s1 = Segment::constant(1.0, 2.0, v(&[0.0]));
        let imp = ImpulseRecord::new(1.0, 1, vec![v(&[-3.0])]);
        let tr = PwsTrajectory::new(1, vec![s0, s1], vec![imp], Some(v(&[3.0]))).unwrap();
        assert_eq!(tr.eval_left(1.0).unwrap()[0], 3.0);
        assert_eq!(tr.eval_right(1.0).unwrap()[0], 0.0);
        assert_eq!(tr.impulse_at(1.0).unwrap().coeffs[0][0], -3.0);
    }

    #[test]
    fn restrict_behaviour() {
        let s: Vec<Segment> = (0..4).map(|k| Segment::constant(k as f64, k as f64 + 1.0, v(&[k as f64]))).collect();
        let imps = vec![
            ImpulseRecord::new(0.0, 1, vec![v(&[1.0])]),
            ImpulseRecord::new(3.0, 1, vec![v(&[2.0])]),
        ];
        let tr = PwsTrajectory::new(1, s, imps, Some(v(&[0.0]))).unwrap();
        let full = tr.restrict(0.0, 4.0).unwrap();
        assert!(full.approx_eq(&tr, 50, 1e-15));
        let mid = tr.restrict(1.0, 2.0).unwrap();
        assert!(mid.impulses().is_empty());
        assert_eq!(mid.eval_left(1.0).unwrap()[0], 0.0);
        assert!(tr.restrict(2.0, 2.0).is_err());
        assert!(tr.restrict(3.0, 1.0).is_err());
    }

    #[test]
    fn impulse_trimming_and_padding() {
        let a = ImpulseRecord::new(1.0, 2, vec![v(&[1.0, 0.0]), v(&[0.0, 0.0]), v(&[0.0, 0.0])]);
        assert_eq!(a.order_count(), 1);
        let b = ImpulseRecord::new(1.0, 2, vec![v(&[1.0, 0.0])]);
        assert!(a.approx_eq(&b, 0.0));
        let st = a.stacked(3).unwrap();
        assert_eq!(st.len(), 6);
        assert_eq!(st[0], 1.0);
        assert!(a.stacked(0).is_err());
    }

    #[test]
    fn flow_segment_matches_closed_form() {
        let g = Mat::from_element(1, 1, -2.0);
        let s = Segment::flow(0.0, 1.0, g, Mat::identity(1, 1), 0.0, v(&[1.5]));
        assert!((s.eval(0.7)[0] - 1.5 * (-1.4f64).exp()).abs() < 1e-14);
        assert!((s.derivative(0.7, 1)[0] + 3.0 * (-1.4f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t * t;
        let values = times.iter().map(|t| v(&[f(*t)])).collect();
        let s = Segment::sampled(0.0, 1.0, times, values).unwrap();
        for t in [0.0, 0.05, 0.33, 0.99, 1.0] {
            assert!((s.eval(t)[0] - f(t)).abs() < 1e-12);
            assert!((s.derivative(t, 1)[0] - (-2.0 + 1.5 * t * t)).abs() < 1e-10);
            assert!((s.derivative(t, 2)[0] - 3.0 * t).abs() < 1e-8);
        }
    }

    #[test]
    fn combination_is_pointwise_difference() {
        let a = PwsTrajectory::constant(0.0, 2.0, v(&[2.0])).unwrap();
        let b = PwsTrajectory::new(
            1,
            vec![Segment::constant(0.0, 1.0, v(&[1.0])), Segment::constant(1.0, 2.0, v(&[5.0]))],
            vec![ImpulseRecord::new(1.0, 1, vec![v(&[0.5]), v(&[1.0])])],
            Some(v(&[1.0])),
        )
        .unwrap();
        let d = PwsTrajectory::combine(&[(1.0, &a), (-1.0, &b)]).unwrap();
        assert_eq!(d.eval(0.5).unwrap()[0], 1.0);
        assert_eq!(d.eval(1.5).unwrap()[0], -3.0);
        let imp = d.impulse_at(1.0).unwrap();
        assert_eq!(imp.coeffs.len(), 2);
        assert_eq!(imp.coeffs[1][0], -1.0);
        assert_eq!(d.initial().unwrap()[0], 1.0);
    }

    #[test]
    fn events_are_time_ordered() {
        let tr = PwsTrajectory::new(
            1,
            vec![Segment::constant(0.0, 1.0, v(&[1.0])), Segment::constant(1.0, 2.0, v(&[0.0]))],
            vec![ImpulseRecord::new(1.0, 1, vec![v(&[-1.0])])],
            None,
        )
        .unwrap();
        let kinds: Vec<&str> = tr
            .events()
            .map(|e| match e {
                Event::Impulse(_) => "imp",
                Event::Segment(_) => "seg",
            })
            .collect();
        assert_eq!(kinds, ["seg", "imp", "seg"]);
    }

    #[test]
    fn construction_errors() {
        assert!(PwsTrajectory::new(1, vec![], vec![], None).is_err());
        let gap = vec![Segment::constant(0.0, 1.0, v(&[1.0])), Segment::constant(1.5, 2.0, v(&[1.0]))];
        assert!(PwsTrajectory::new(1, gap, vec![], None).is_err());
        let off = vec![ImpulseRecord::new(0.5, 1, vec![v(&[1.0])])];
        assert!(PwsTrajectory::new(1, vec![Segment::constant(0.0, 1.0, v(&[1.0]))], off, None).is_err());
    }
}
