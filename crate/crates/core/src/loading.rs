//! Loading programs: which channels are strain driven and which hold a
//! stress, segment by segment.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SymTensor;

/// Prescribed strain rate of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateFn {
    Constant { value: f64 },
    /// `amplitude * cos(frequency * t)` in program time.
    Cosine { amplitude: f64, frequency: f64 },
}

impl RateFn {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            RateFn::Constant { value } => value,
            RateFn::Cosine {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).cos(),
        }
    }

    fn scaled(&self, c: f64) -> RateFn {
        match *self {
            RateFn::Constant { value } => RateFn::Constant { value: c * value },
            RateFn::Cosine {
                amplitude,
                frequency,
            } => RateFn::Cosine {
                amplitude: c * amplitude,
                frequency,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChannelControl {
    StrainRate { rate: RateFn },
    HoldStress { target: f64 },
}

impl ChannelControl {
    pub fn rate(value: f64) -> Self {
        ChannelControl::StrainRate {
            rate: RateFn::Constant { value },
        }
    }

    pub fn hold(target: f64) -> Self {
        ChannelControl::HoldStress { target }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub controls: [ChannelControl; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMode {
    TensionOnly,
    TensionCompression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BiaxialKind {
    Bc,
    Ubc,
    Ubcs,
}

/// Parameters a program was built from; stored in dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgramDescriptor {
    Uniaxial {
        rate: f64,
        amplitudes: Vec<f64>,
        mode: CycleMode,
    },
    Biaxial {
        scenario: BiaxialKind,
        p0: f64,
        axial_rate: f64,
        cycles: usize,
    },
    Custom {
        description: String,
    },
}

impl ProgramDescriptor {
    pub fn build(&self) -> Result<LoadingProgram> {
        match self {
            ProgramDescriptor::Uniaxial {
                rate,
                amplitudes,
                mode,
            } => build_uniaxial_cycles(*rate, amplitudes, *mode),
            ProgramDescriptor::Biaxial {
                scenario,
                p0,
                axial_rate,
                cycles,
            } => build_biaxial(*scenario, *p0, *axial_rate, *cycles),
            ProgramDescriptor::Custom { description } => Err(Error::InvalidProgram(format!(
                "custom program '{description}' cannot be rebuilt from its descriptor"
            ))),
        }
    }

    /// Number of load cycles, used to size uniform sampling.
    pub fn cycles(&self) -> usize {
        match self {
            ProgramDescriptor::Uniaxial { amplitudes, .. } => amplitudes.len(),
            ProgramDescriptor::Biaxial { cycles, .. } => *cycles,
            ProgramDescriptor::Custom { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingProgram {
    pub segments: Vec<Segment>,
    pub initial_stress: SymTensor,
    pub descriptor: ProgramDescriptor,
}

/// Controls in effect at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSample {
    StrainRate(f64),
    Stress(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub channels: [ChannelSample; 6],
}

impl ControlSample {
    pub fn strain_rate_channels(&self) -> Vec<(usize, f64)> {
        self.channels
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                ChannelSample::StrainRate(r) => Some((i, *r)),
                ChannelSample::Stress(_) => None,
            })
            .collect()
    }

    pub fn stress_hold_channels(&self) -> Vec<(usize, f64)> {
        self.channels
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                ChannelSample::Stress(s) => Some((i, *s)),
                ChannelSample::StrainRate(_) => None,
            })
            .collect()
    }
}

impl LoadingProgram {
    pub fn new(
        segments: Vec<Segment>,
        initial_stress: SymTensor,
        descriptor: ProgramDescriptor,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyProgram);
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidProgram(format!(
                    "segment {k} has duration {}",
                    s.duration
                )));
            }
            if !s
                .controls
                .iter()
                .any(|c| matches!(c, ChannelControl::StrainRate { .. }))
            {
                return Err(Error::InvalidProgram(format!(
                    "segment {k} has no strain-controlled channel"
                )));
            }
        }
        Ok(LoadingProgram {
            segments,
            initial_stress,
            descriptor,
        })
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start times of all segments, plus the end time.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        b.push(t);
        for s in &self.segments {
            t += s.duration;
            b.push(t);
        }
        b
    }

    /// Index of the segment active at `t` (half-open intervals; the final
    /// instant belongs to the last segment).
    pub fn segment_at(&self, t: f64) -> Result<usize> {
        let end = self.total_duration();
        if !(0.0..=end).contains(&t) {
            return Err(Error::OutOfRange { t, end });
        }
        let b = self.boundaries();
        let k = b[1..].partition_point(|&e| e <= t);
        Ok(k.min(self.segments.len() - 1))
    }

    pub fn control_at(&self, t: f64) -> Result<ControlSample> {
        let k = self.segment_at(t)?;
        Ok(self.sample_segment(k, t))
    }

    /// Controls of segment `k` evaluated at `t`, without range checks.
    pub fn sample_segment(&self, k: usize, t: f64) -> ControlSample {
        let channels = self.segments[k].controls.map(|c| match c {
            ChannelControl::StrainRate { rate } => ChannelSample::StrainRate(rate.at(t)),
            ChannelControl::HoldStress { target } => ChannelSample::Stress(target),
        });
        ControlSample { channels }
    }
}

/// Uniaxial-stress cycles: the axial strain ramps at `rate` to each amplitude
/// and back to zero, lateral stresses are held at zero, shear strains fixed.
pub fn build_uniaxial_cycles(
    rate: f64,
    amplitudes: &[f64],
    mode: CycleMode,
) -> Result<LoadingProgram> {
    if amplitudes.is_empty() {
        return Err(Error::EmptyProgram);
    }
    if !(rate > 0.0) {
        return Err(Error::InvalidProgram(format!("rate must be positive, got {rate}")));
    }
    if amplitudes.iter().any(|a| !(*a > 0.0)) || amplitudes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidProgram(
            "amplitudes must be positive and increasing".into(),
        ));
    }
    let seg = |r: f64, duration: f64| Segment {
        duration,
        controls: [
            ChannelControl::rate(r),
            ChannelControl::hold(0.0),
            ChannelControl::hold(0.0),
            ChannelControl::rate(0.0),
            ChannelControl::rate(0.0),
            ChannelControl::rate(0.0),
        ],
    };
    let mut segments = Vec::new();
    for &a in amplitudes {
        let d = a / rate;
        match mode {
            CycleMode::TensionOnly => {
                segments.push(seg(rate, d));
                segments.push(seg(-rate, d));
            }
            CycleMode::TensionCompression => {
                segments.push(seg(rate, d));
                segments.push(seg(-rate, 2.0 * d));
                segments.push(seg(rate, d));
            }
        }
    }
    LoadingProgram::new(
        segments,
        SymTensor::zero(),
        ProgramDescriptor::Uniaxial {
            rate,
            amplitudes: amplitudes.to_vec(),
            mode,
        },
    )
}

/// Biaxial compression after isotropic confinement `p0` (tension positive).
///
/// Each cycle compresses the axial channel for one time unit and reverses for
/// one time unit. Drained tests hold the lateral stresses at `p0`; undrained
/// tests drive the lateral strains at minus half the axial rate. The
/// sinusoidal variant uses the rate `axial_rate * cos(pi t)`.
pub fn build_biaxial(
    kind: BiaxialKind,
    p0: f64,
    axial_rate: f64,
    cycles: usize,
) -> Result<LoadingProgram> {
    if !(axial_rate > 0.0) {
        return Err(Error::InvalidProgram(format!(
            "axial rate must be positive, got {axial_rate}"
        )));
    }
    if cycles == 0 {
        return Err(Error::EmptyProgram);
    }
    let shear = ChannelControl::rate(0.0);
    let seg = |axial: RateFn, duration: f64| {
        let lateral = match kind {
            BiaxialKind::Bc => ChannelControl::hold(p0),
            BiaxialKind::Ubc | BiaxialKind::Ubcs => ChannelControl::StrainRate {
                rate: axial.scaled(-0.5),
            },
        };
        Segment {
            duration,
            controls: [
                ChannelControl::StrainRate { rate: axial },
                lateral,
                lateral,
                shear,
                shear,
                shear,
            ],
        }
    };
    let segments = match kind {
        BiaxialKind::Bc | BiaxialKind::Ubc => (0..cycles)
            .flat_map(|_| {
                [
                    seg(RateFn::Constant { value: -axial_rate }, 1.0),
                    seg(RateFn::Constant { value: axial_rate }, 1.0),
                ]
            })
            .collect(),
        BiaxialKind::Ubcs => {
            let wave = RateFn::Cosine {
                amplitude: -axial_rate,
                frequency: PI,
            };
            (0..cycles).map(|_| seg(wave, 2.0)).collect()
        }
    };
    LoadingProgram::new(
        segments,
        SymTensor::identity(p0),
        ProgramDescriptor::Biaxial {
            scenario: kind,
            p0,
            axial_rate,
            cycles,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_triangle() {
        let p = build_uniaxial_cycles(0.01, &[0.01], CycleMode::TensionOnly).unwrap();
        assert!((p.total_duration() - 2.0).abs() < 1e-15);
        assert_eq!(p.segments.len(), 2);
        let c = p.control_at(0.0).unwrap();
        assert_eq!(c.channels[0], ChannelSample::StrainRate(0.01));
        assert_eq!(c.stress_hold_channels(), vec![(1, 0.0), (2, 0.0)]);
        // boundary belongs to the later segment
        let c = p.control_at(1.0).unwrap();
        assert_eq!(c.channels[0], ChannelSample::StrainRate(-0.01));
        assert!(matches!(p.control_at(2.5), Err(Error::OutOfRange { .. })));
        assert!(p.control_at(2.0).is_ok());
    }

    #[test]
    fn empty_and_invalid() {
        assert!(matches!(
            build_uniaxial_cycles(0.01, &[], CycleMode::TensionOnly),
            Err(Error::EmptyProgram)
        ));
        assert!(build_uniaxial_cycles(0.01, &[0.02, 0.01], CycleMode::TensionOnly).is_err());
        assert!(build_uniaxial_cycles(0.0, &[0.01], CycleMode::TensionOnly).is_err());
    }

    #[test]
    fn three_cycles_monotone_time() {
        let p = build_uniaxial_cycles(0.01, &[0.01, 0.02, 0.03], CycleMode::TensionOnly).unwrap();
        let b = p.boundaries();
        assert_eq!(b.len(), 7);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        assert!((p.total_duration() - 12.0).abs() < 1e-12);
        let tc =
            build_uniaxial_cycles(0.01, &[0.01, 0.02], CycleMode::TensionCompression).unwrap();
        assert!((tc.total_duration() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn biaxial_programs() {
        let bc = build_biaxial(BiaxialKind::Bc, -100.0, 0.005, 2).unwrap();
        assert_eq!(bc.initial_stress, SymTensor::identity(-100.0));
        assert_eq!(
            bc.control_at(0.3).unwrap().stress_hold_channels(),
            vec![(1, -100.0), (2, -100.0)]
        );
        let ubc = build_biaxial(BiaxialKind::Ubc, -100.0, 0.005, 2).unwrap();
        let c = ubc.control_at(0.2).unwrap();
        assert_eq!(c.channels[1], ChannelSample::StrainRate(0.0025));
        let ubcs = build_biaxial(BiaxialKind::Ubcs, -100.0, 0.005, 1).unwrap();
        match ubcs.control_at(0.5).unwrap().channels[0] {
            ChannelSample::StrainRate(r) => assert!(r.abs() < 1e-18),
            _ => panic!("axial channel must be strain driven"),
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let p = build_biaxial(BiaxialKind::Ubcs, -100.0, 0.005, 3).unwrap();
        let js = serde_json::to_string(&p.descriptor).unwrap();
        let d: ProgramDescriptor = serde_json::from_str(&js).unwrap();
        assert_eq!(d.build().unwrap(), p);
    }

    proptest! {
        #[test]
        fn undrained_rates_are_isochoric(
            kind in prop::sample::select(vec![BiaxialKind::Ubc, BiaxialKind::Ubcs]),
            rate in 1e-4..1e-1f64,
            cycles in 1usize..4,
            frac in 0.0..1.0f64,
        ) {
            let p = build_biaxial(kind, -100.0, rate, cycles).unwrap();
            let t = frac * p.total_duration();
            let c = p.control_at(t).unwrap();
            let tr: f64 = c.channels[..3].iter().map(|x| match x {
                ChannelSample::StrainRate(r) => *r,
                ChannelSample::Stress(_) => f64::NAN,
            }).sum();
            prop_assert_eq!(tr, 0.0);
        }

        #[test]
        fn duration_is_sum_of_segments(
            amps in prop::collection::vec(1e-4..1e-2f64, 1..5),
            rate in 1e-3..1e-1f64,
        ) {
            let mut a = amps.clone();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            a.dedup();
            let p = build_uniaxial_cycles(rate, &a, CycleMode::TensionOnly).unwrap();
            let want: f64 = a.iter().map(|x| 2.0 * x / rate).sum();
            prop_assert!((p.total_duration() - want).abs() <= 1e-12 * want);
        }
    }
}
