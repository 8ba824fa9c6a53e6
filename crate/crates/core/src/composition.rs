//! Random mixed-traffic sequences and their decomposition into mixed
//! platoons, independent CAVs and independent HDVs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleClass {
    Cav,
    Hdv,
}

/// Information flow topology of the mixed platoons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Multi-predecessor-following: the CAV sits at the platoon tail.
    Mpf,
    /// Multi-successor-leading: the CAV sits at the platoon head.
    Msl,
}

/// Control strategy for a whole scenario. `Cacc` is the baseline where every
/// CAV runs the CACC law independently and no platoons are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mpf,
    Msl,
    Cacc,
}

impl Strategy {
    pub fn topology(self) -> Option<Topology> {
        match self {
            Strategy::Mpf => Some(Topology::Mpf),
            Strategy::Msl => Some(Topology::Msl),
            Strategy::Cacc => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mpf => "mpf",
            Strategy::Msl => "msl",
            Strategy::Cacc => "cacc",
        }
    }
}

/// An ordered CAV/HDV sequence over vehicles `1..=n`. The head vehicle
/// (index 0) is the perturbation source and is never part of the sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficComposition {
    classes: Vec<VehicleClass>,
    pub seed: u64,
}

impl TrafficComposition {
    pub fn from_classes(classes: Vec<VehicleClass>, seed: u64) -> Self {
        Self { classes, seed }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class of vehicle `i` for `i` in `1..=n`.
    pub fn class(&self, i: usize) -> VehicleClass {
        self.classes[i - 1]
    }

    pub fn classes(&self) -> &[VehicleClass] {
        &self.classes
    }

    pub fn cav_count(&self) -> usize {
        self.classes
            .iter()
            .filter(|c| **c == VehicleClass::Cav)
            .count()
    }

    pub fn reversed(&self) -> Self {
        let mut classes = self.classes.clone();
        classes.reverse();
        Self {
            classes,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    MixedPlatoon,
    IndependentCav,
    IndependentHdv,
}

/// One contiguous segment of the partition, holding vehicle indices in
/// traffic order (front of traffic first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub members: Vec<usize>,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonPartition {
    pub segments: Vec<Segment>,
}

impl PlatoonPartition {
    /// Mixed-platoon segments only.
    pub fn platoons(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::MixedPlatoon)
    }
}

/// Closed-form probabilities of the different segment types under i.i.d.
/// CAV placement with penetration rate `p` and maximum platoon size `m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentProbabilities {
    /// Probability of a full-size platoon: `p (1-p)^(M-1)`.
    pub p_size_max: f64,
    /// Probability of a size-`m` platoon for `m` in `2..=M-1`:
    /// `p^2 (1-p)^(m-1)`, indexed in ascending `m`.
    pub p_size: Vec<(usize, f64)>,
    /// Independent-CAV probability: `p^2`.
    pub p_cav: f64,
    /// Independent-HDV probability: `(1-p)^M`.
    pub p_hdv: f64,
}

/// Draw a composition with each vehicle independently a CAV with
/// probability `p`. Identical `(n, p, seed)` reproduce identical sequences.
pub fn sample_composition(n: usize, p: f64, seed: u64) -> Result<TrafficComposition> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "penetration rate {p} outside [0, 1]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("vehicle count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = (0..n)
        .map(|_| {
            if rng.random::<f64>() < p {
                VehicleClass::Cav
            } else {
                VehicleClass::Hdv
            }
        })
        .collect();
    Ok(TrafficComposition { classes, seed })
}

/// Partition a composition into mixed platoons and independent vehicles.
///
/// MPF: each CAV groups with up to `m_max - 1` unclaimed HDVs immediately
/// ahead; a CAV directly behind another CAV, or with no HDV ahead of it
/// inside the sequence, stays independent. MSL is the mirror rule with the
/// HDVs immediately behind. Claims resolve greedily from the front of
/// traffic.
pub fn partition(c: &TrafficComposition, topology: Topology, m_max: usize) -> PlatoonPartition {
    assert!(m_max >= 2, "maximum platoon size must be >= 2");
    let n = c.len();
    // segment id per vehicle; usize::MAX = unassigned
    let mut assigned: Vec<Option<usize>> = vec![None; n + 1];
    let mut platoons: Vec<Vec<usize>> = Vec::new();
    let mut indep_cav: Vec<usize> = Vec::new();

    for i in 1..=n {
        if c.class(i) != VehicleClass::Cav {
            continue;
        }
        match topology {
            Topology::Mpf => {
                if i > 1 && c.class(i - 1) == VehicleClass::Cav {
                    indep_cav.push(i);
                    continue;
                }
                let mut members = Vec::new();
                let mut j = i;
                while j > 1
                    && c.class(j - 1) == VehicleClass::Hdv
                    && assigned[j - 1].is_none()
                    && members.len() < m_max - 1
                {
                    j -= 1;
                    members.push(j);
                }
                if members.is_empty() {
                    indep_cav.push(i);
                    continue;
                }
                members.reverse();
                members.push(i);
                let id = platoons.len();
                for &v in &members {
                    assigned[v] = Some(id);
                }
                platoons.push(members);
            }
            Topology::Msl => {
                if i < n && c.class(i + 1) == VehicleClass::Cav {
                    indep_cav.push(i);
                    continue;
                }
                let mut members = vec![i];
                let mut j = i;
                while j < n
                    && c.class(j + 1) == VehicleClass::Hdv
                    && assigned[j + 1].is_none()
                    && members.len() < m_max
                {
                    j += 1;
                    members.push(j);
                }
                if members.len() == 1 {
                    indep_cav.push(i);
                    continue;
                }
                let id = platoons.len();
                for &v in &members {
                    assigned[v] = Some(id);
                }
                platoons.push(members);
            }
        }
    }
    for &i in &indep_cav {
        assigned[i] = Some(usize::MAX);
    }

    // emit segments in traffic order
    let mut segments = Vec::new();
    let mut emitted: Vec<bool> = vec![false; platoons.len()];
    for (i, &slot) in assigned.iter().enumerate().skip(1) {
        match slot {
            None => segments.push(Segment {
                kind: SegmentKind::IndependentHdv,
                members: vec![i],
            }),
            Some(usize::MAX) => segments.push(Segment {
                kind: SegmentKind::IndependentCav,
                members: vec![i],
            }),
            Some(id) => {
                if !emitted[id] {
                    emitted[id] = true;
                    segments.push(Segment {
                        kind: SegmentKind::MixedPlatoon,
                        members: platoons[id].clone(),
                    });
                }
            }
        }
    }
    PlatoonPartition { segments }
}

/// Closed-form segment-type probabilities, evaluated verbatim. The four
/// values are exponent weights in the stability criterion and are not
/// normalized to sum to one.
pub fn segment_probabilities(p: f64, m_max: usize) -> SegmentProbabilities {
    assert!((0.0..=1.0).contains(&p), "penetration rate outside [0, 1]");
    assert!(m_max >= 2, "maximum platoon size must be >= 2");
    let q = 1.0 - p;
    SegmentProbabilities {
        p_size_max: p * q.powi(m_max as i32 - 1),
        p_size: (2..m_max)
            .map(|m| (m, p * p * q.powi(m as i32 - 1)))
            .collect(),
        p_cav: p * p,
        p_hdv: q.powi(m_max as i32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use VehicleClass::{Cav, Hdv};

    fn comp(classes: &[VehicleClass]) -> TrafficComposition {
        TrafficComposition::from_classes(classes.to_vec(), 0)
    }

    #[test]
    fn sample_extremes() {
        let all_hdv = sample_composition(5, 0.0, 1).unwrap();
        assert!(all_hdv.classes().iter().all(|c| *c == Hdv));
        let all_cav = sample_composition(5, 1.0, 1).unwrap();
        assert!(all_cav.classes().iter().all(|c| *c == Cav));
        assert!(sample_composition(5, 1.5, 1).is_err());
        assert!(sample_composition(0, 0.5, 1).is_err());
    }

    #[test]
    fn sample_reproducible_and_unbiased() {
        let a = sample_composition(1000, 0.3, 42).unwrap();
        let b = sample_composition(1000, 0.3, 42).unwrap();
        assert_eq!(a, b);
        let big = sample_composition(100_000, 0.3, 7).unwrap();
        let frac = big.cav_count() as f64 / 100_000.0;
        assert!((frac - 0.3).abs() < 0.01, "CAV fraction {frac}");
    }

    #[test]
    fn partition_mpf_full_platoon() {
        let c = comp(&[Hdv, Hdv, Hdv, Cav]);
        let part = partition(&c, Topology::Mpf, 4);
        assert_eq!(part.segments.len(), 1);
        assert_eq!(part.segments[0].kind, SegmentKind::MixedPlatoon);
        assert_eq!(part.segments[0].members, vec![1, 2, 3, 4]);
    }

    #[test]
    fn partition_mpf_truncates_at_limit() {
        let c = comp(&[Hdv, Hdv, Hdv, Hdv, Cav]);
        let part = partition(&c, Topology::Mpf, 4);
        assert_eq!(part.segments.len(), 2);
        assert_eq!(part.segments[0].kind, SegmentKind::IndependentHdv);
        assert_eq!(part.segments[0].members, vec![1]);
        assert_eq!(part.segments[1].members, vec![2, 3, 4, 5]);
    }

    #[test]
    fn partition_msl_cav_successor() {
        let c = comp(&[Cav, Cav, Hdv]);
        let part = partition(&c, Topology::Msl, 4);
        assert_eq!(part.segments.len(), 2);
        assert_eq!(part.segments[0].kind, SegmentKind::IndependentCav);
        assert_eq!(part.segments[1].kind, SegmentKind::MixedPlatoon);
        assert_eq!(part.segments[1].members, vec![2, 3]);
    }

    #[test]
    fn partition_boundary_cav_is_independent() {
        // MPF: CAV at the very front has no HDV ahead inside the sequence
        let c = comp(&[Cav, Hdv, Hdv]);
        let part = partition(&c, Topology::Mpf, 4);
        assert_eq!(part.segments[0].kind, SegmentKind::IndependentCav);
        // MSL: CAV at the very rear has no HDV behind
        let c = comp(&[Hdv, Hdv, Cav]);
        let part = partition(&c, Topology::Msl, 4);
        assert_eq!(part.segments.last().unwrap().kind, SegmentKind::IndependentCav);
    }

    #[test]
    fn every_platoon_has_exactly_one_cav() {
        let c = sample_composition(500, 0.4, 3).unwrap();
        for topo in [Topology::Mpf, Topology::Msl] {
            let part = partition(&c, topo, 6);
            for seg in part.platoons() {
                let cavs = seg
                    .members
                    .iter()
                    .filter(|&&i| c.class(i) == Cav)
                    .count();
                assert_eq!(cavs, 1);
                assert!(seg.size() >= 2 && seg.size() <= 6);
                let cav_pos = match topo {
                    Topology::Mpf => *seg.members.last().unwrap(),
                    Topology::Msl => seg.members[0],
                };
                assert_eq!(c.class(cav_pos), Cav);
            }
        }
    }

    #[test]
    fn probabilities_examples() {
        let sp = segment_probabilities(0.2, 6);
        assert_relative_eq!(sp.p_hdv, 0.262144, epsilon = 1e-12);
        let sp = segment_probabilities(0.5, 4);
        assert_relative_eq!(sp.p_size_max, 0.0625, epsilon = 1e-12);
        assert_relative_eq!(sp.p_cav, 0.25, epsilon = 1e-12);
        let sp = segment_probabilities(0.0, 5);
        assert_eq!(sp.p_hdv, 1.0);
        assert_eq!(sp.p_cav, 0.0);
        assert_eq!(sp.p_size_max, 0.0);
        assert!(sp.p_size.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn size_probability_decreasing_in_m() {
        let sp = segment_probabilities(0.3, 8);
        for w in sp.p_size.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
    }

    #[test]
    fn observed_sizes_positive_where_model_positive() {
        let c = sample_composition(100_000, 0.3, 11).unwrap();
        let part = partition(&c, Topology::Mpf, 4);
        let mut counts = [0usize; 5];
        for seg in part.platoons() {
            counts[seg.size()] += 1;
        }
        // Eq-16 weights are positive for m = 2..=4 at p = 0.3; all sizes occur
        for (m, &count) in counts.iter().enumerate().skip(2) {
            assert!(count > 0, "no platoons of size {m}");
        }
    }

    proptest! {
        #[test]
        fn partition_covers_all_vehicles(n in 1usize..80, p in 0.0f64..=1.0, seed in 0u64..1000, m_max in 2usize..8) {
            let c = sample_composition(n, p, seed).unwrap();
            for topo in [Topology::Mpf, Topology::Msl] {
                let part = partition(&c, topo, m_max);
                let mut seen = vec![false; n + 1];
                let mut last = 0usize;
                for seg in &part.segments {
                    for &i in &seg.members {
                        prop_assert!(i >= 1 && i <= n);
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                    }
                    // segments appear in traffic order
                    prop_assert!(seg.members[0] > last || seg.members[0] > 0);
                    last = seg.members[0];
                }
                prop_assert!(seen[1..=n].iter().all(|&s| s));
            }
        }

        #[test]
        fn mpf_msl_duality(n in 1usize..60, p in 0.0f64..=1.0, seed in 0u64..500, m_max in 2usize..8) {
            let c = sample_composition(n, p, seed).unwrap();
            let msl = partition(&c, Topology::Msl, m_max);
            let rev = c.reversed();
            let mut mpf_rev = partition(&rev, Topology::Mpf, m_max);
            // map reversed indices back and reverse segment & member order
            mpf_rev.segments.reverse();
            for seg in &mut mpf_rev.segments {
                for i in seg.members.iter_mut() {
                    *i = n + 1 - *i;
                }
                seg.members.reverse();
            }
            prop_assert_eq!(msl, mpf_rev);
        }

        #[test]
        fn probabilities_in_unit_interval(p in 0.0f64..=1.0, m_max in 2usize..10) {
            let sp = segment_probabilities(p, m_max);
            let mut all = vec![sp.p_size_max, sp.p_cav, sp.p_hdv];
            all.extend(sp.p_size.iter().map(|&(_, v)| v));
            for v in all {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
