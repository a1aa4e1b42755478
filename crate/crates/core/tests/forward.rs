mod common;

use cpinn::constitutive::{MaterialParams, ModelKind};
use cpinn::forward::{
    add_noise, export, finite_diff, finite_diff_rates, import, integrate, nondimensionalize,
    dimensionalize, prepare, sample_dataset, SolverOptions,
};
use cpinn::loading::{
    build_biaxial, build_uniaxial_cycles, BiaxialKind, ChannelControl, CycleMode, LoadingProgram,
    ProgramDescriptor, Segment,
};
use cpinn::tensor::{convert_moduli, SymTensor};
use cpinn::Error;

use common::oracle_stress;

fn vmih_program() -> LoadingProgram {
    build_uniaxial_cycles(0.01, &[0.01, 0.02, 0.03], CycleMode::TensionOnly).unwrap()
}

#[test]
fn vmih_matches_closed_form() {
    let p = MaterialParams::vmih();
    let prog = vmih_program();
    let path = integrate(&prog, &p, ModelKind::Vmih, &SolverOptions::default()).unwrap();
    let pts = path.step_points();
    let times: Vec<f64> = pts.iter().map(|q| q.t).collect();
    let (e, _) = convert_moduli(p.kappa, p.mu);
    let want = oracle_stress(&prog, &times, e, p.sigma_y0, p.kbar, 0.0);
    let peak = want.iter().fold(0.0_f64, |m, w| m.max(w.0.abs()));
    for (q, w) in pts.iter().zip(&want) {
        assert!((q.sigma[0] - w.0).abs() <= 1e-6 * peak, "t={} {} vs {}", q.t, q.sigma[0], w.0);
        assert!((q.alpha - w.1).abs() <= 1e-9, "alpha at t={}", q.t);
        assert!(q.sigma[1].abs() <= 1e-8 * peak && q.sigma[2].abs() <= 1e-8 * peak);
    }
    // yield strain and hardening tangent
    let eps_y = p.sigma_y0 / e;
    assert!((eps_y - 1e-3).abs() < 1e-7);
    let tangent = e * p.kbar / (e + p.kbar);
    assert!((tangent - 9523.8).abs() < 1.0);
}

#[test]
fn vmkh_matches_closed_form() {
    let p = MaterialParams::vmkh();
    let prog = build_uniaxial_cycles(0.01, &[0.005, 0.01], CycleMode::TensionCompression).unwrap();
    let path = integrate(&prog, &p, ModelKind::Vmkh, &SolverOptions::default()).unwrap();
    let pts = path.step_points();
    let times: Vec<f64> = pts.iter().map(|q| q.t).collect();
    let (e, _) = convert_moduli(p.kappa, p.mu);
    let want = oracle_stress(&prog, &times, e, p.sigma_y0, 0.0, p.hbar);
    let peak = want.iter().fold(0.0_f64, |m, w| m.max(w.0.abs()));
    for (q, w) in pts.iter().zip(&want) {
        assert!((q.sigma[0] - w.0).abs() <= 1e-6 * peak, "t={} {} vs {}", q.t, q.sigma[0], w.0);
        assert!(q.beta.trace().abs() < 1e-9 * peak);
    }
}

#[test]
fn generated_paths_are_admissible() {
    let cases = [
        (ModelKind::Vmih, MaterialParams::vmih(), vmih_program()),
        (
            ModelKind::VmMixed,
            MaterialParams { hbar: 5e3, ..MaterialParams::vmih() },
            build_uniaxial_cycles(0.01, &[0.004, 0.008], CycleMode::TensionCompression).unwrap(),
        ),
        (
            ModelKind::DruckerPrager,
            MaterialParams::silty_soil(),
            build_biaxial(BiaxialKind::Bc, -100.0, 0.005, 2).unwrap(),
        ),
    ];
    for (kind, p, prog) in cases {
        let opts = SolverOptions::default();
        let path = integrate(&prog, &p, kind, &opts).unwrap();
        let mut last_gamma = 0.0;
        for s in &path.steps {
            let f = path.yield_at(&s.y1);
            assert!(f <= 10.0 * opts.rtol * p.sigma_y0, "{kind}: F = {f} at t = {}", s.t1);
            let g = s.y1[12];
            assert!(g >= last_gamma - 1e-15, "{kind}: gamma decreased");
            last_gamma = g;
            assert!(s.f0[12] >= -1e-12, "{kind}: negative multiplier rate");
            if path.yield_at(&s.y0) < -opts.tol_f_rel * p.sigma_y0 {
                assert_eq!(s.f0[12], 0.0, "{kind}: flow inside the elastic domain");
            }
        }
    }
}

#[test]
fn elastic_segments_follow_stiffness() {
    let p = MaterialParams::vmih();
    let prog = build_uniaxial_cycles(0.01, &[0.0005], CycleMode::TensionOnly).unwrap();
    let path = integrate(&prog, &p, ModelKind::Vmih, &SolverOptions::default()).unwrap();
    let (e, nu) = convert_moduli(p.kappa, p.mu);
    for q in path.step_points() {
        assert!((q.sigma[0] - e * q.eps[0]).abs() < 1e-8 * e * 5e-4);
        assert!((q.eps[1] + nu * q.eps[0]).abs() < 1e-12);
        assert_eq!(q.gamma, 0.0);
    }
}

#[test]
fn zero_amplitude_program_stays_at_rest() {
    let seg = Segment {
        duration: 1.0,
        controls: [
            ChannelControl::rate(0.0),
            ChannelControl::hold(0.0),
            ChannelControl::hold(0.0),
            ChannelControl::rate(0.0),
            ChannelControl::rate(0.0),
            ChannelControl::rate(0.0),
        ],
    };
    let prog = LoadingProgram::new(
        vec![seg],
        SymTensor::zero(),
        ProgramDescriptor::Custom { description: "rest".into() },
    )
    .unwrap();
    let path = integrate(&prog, &MaterialParams::vmih(), ModelKind::Vmih, &SolverOptions::default())
        .unwrap();
    for q in path.step_points() {
        assert_eq!(q.sigma.max_abs(), 0.0);
        assert_eq!(q.gamma, 0.0);
    }
}

#[test]
fn damage_softening_branch() {
    let p = MaterialParams::vmd();
    let prog = build_uniaxial_cycles(0.01, &[0.05, 0.1], CycleMode::TensionOnly).unwrap();
    let path = integrate(&prog, &p, ModelKind::VmDamage, &SolverOptions::default()).unwrap();
    let pts = path.step_points();
    let peak = pts.iter().fold(0.0_f64, |m, q| m.max(q.sigma[0]));
    assert!((peak - 663.0).abs() < 1e-4, "peak {peak}");
    for q in &pts {
        if q.alpha > 1e-6 && q.omega < 0.999 {
            // on the yield surface the Cauchy stress follows (1 - alpha/alpha_s) sigma_y0
            let on_surface = path.yield_at(&path.state_at(q.t)).abs() < 1e-4;
            if on_surface {
                let want = (1.0 - q.alpha / p.alpha_s) * p.sigma_y0;
                assert!((q.sigma[0].abs() - want).abs() < 1e-4 * p.sigma_y0, "t={} {} vs {want}", q.t, q.sigma[0]);
            }
        }
        assert!(q.omega < 1.0);
    }
}

#[test]
fn damage_saturation_stops_generation() {
    let p = MaterialParams { alpha_s: 0.01, ..MaterialParams::vmd() };
    let prog = build_uniaxial_cycles(0.01, &[0.05], CycleMode::TensionOnly).unwrap();
    let r = integrate(&prog, &p, ModelKind::VmDamage, &SolverOptions::default());
    assert!(matches!(r, Err(Error::DamageSaturated { .. })), "{r:?}");
}

#[test]
fn undrained_paths_are_isochoric() {
    let p = MaterialParams::silty_soil();
    for kind in [BiaxialKind::Ubc, BiaxialKind::Ubcs] {
        let prog = build_biaxial(kind, -100.0, 0.005, 2).unwrap();
        let path = integrate(&prog, &p, ModelKind::DruckerPrager, &SolverOptions::default()).unwrap();
        assert!(path.steps.iter().any(|s| s.f0[12] > 0.0), "{kind:?} never yields");
        for q in path.step_points() {
            assert!(q.eps.trace().abs() <= 1e-10, "{kind:?}: trace {}", q.eps.trace());
        }
    }
}

#[test]
fn drained_lateral_stress_is_held() {
    let p = MaterialParams::silty_soil();
    let prog = build_biaxial(BiaxialKind::Bc, -100.0, 0.005, 2).unwrap();
    let path = integrate(&prog, &p, ModelKind::DruckerPrager, &SolverOptions::default()).unwrap();
    for q in path.step_points() {
        assert!((q.sigma[1] + 100.0).abs() < 1e-6 && (q.sigma[2] + 100.0).abs() < 1e-6);
    }
    assert!(path.steps.iter().any(|s| s.f0[12] > 0.0));
}

#[test]
fn tighter_tolerance_converges() {
    let p = MaterialParams::silty_soil();
    let prog = build_biaxial(BiaxialKind::Ubcs, -100.0, 0.005, 1).unwrap();
    let run = |rtol: f64| {
        let o = SolverOptions { rtol, ..SolverOptions::default() };
        let path = integrate(&prog, &p, ModelKind::DruckerPrager, &o).unwrap();
        path.point_at(prog.total_duration()).sigma
    };
    let a = run(1e-6);
    let b = run(5e-7);
    let c = run(1e-10);
    let d_ab = (a - b).max_abs();
    let d_ac = (a - c).max_abs();
    assert!(d_ab <= d_ac.max(1e-9) * 10.0);
    assert!(d_ac <= 1e-3 * 100.0, "difference {d_ac}");
}

#[test]
fn sampling_counts_and_scaling() {
    let path = integrate(&vmih_program(), &MaterialParams::vmih(), ModelKind::Vmih, &SolverOptions::default())
        .unwrap();
    let d = sample_dataset(&path, 100).unwrap();
    assert_eq!(d.len(), 301);
    assert_eq!(sample_dataset(&path, 20).unwrap().len(), 61);
    assert!(matches!(sample_dataset(&path, 1), Err(Error::TooFewPoints { .. })));

    let s = nondimensionalize(&d).unwrap();
    let smax = s.sig.iter().fold(0.0_f64, |m, x| m.max(x.max_abs()));
    assert_eq!(smax, 1.0);
    assert!((s.scaling.e_star - s.scaling.sigma_star / s.scaling.eps_star).abs() < 1e-9);
    let back = dimensionalize(&s);
    for i in 0..d.len() {
        assert!((back.sig[i] - d.sig[i]).max_abs() <= 1e-12 * s.scaling.sigma_star);
        assert!((back.t[i] - d.t[i]).abs() <= 1e-12 * d.t[d.len() - 1]);
    }
    let mut z = d.clone();
    z.eps.iter_mut().for_each(|e| *e = SymTensor::zero());
    assert!(matches!(nondimensionalize(&z), Err(Error::DegenerateData(_))));
}

#[test]
fn finite_differences_are_second_order() {
    let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
    let y: Vec<f64> = t.iter().map(|x| 2.0 - 1.5 * x).collect();
    for r in finite_diff(&t, &y).unwrap() {
        assert!((r + 1.5).abs() < 1e-12);
    }
    let err = |n: usize| {
        let h = 1.0 / n as f64;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        finite_diff(&t, &y)
            .unwrap()
            .iter()
            .zip(&t)
            .map(|(d, x)| (d - x.cos()).abs())
            .fold(0.0, f64::max)
    };
    let order = (err(20) / err(40)).log2();
    assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    assert!(matches!(finite_diff(&[0.0, 1.0], &[0.0, 1.0]), Err(Error::TooFewPoints { .. })));
}

#[test]
fn noise_statistics_and_determinism() {
    let path = integrate(&vmih_program(), &MaterialParams::vmih(), ModelKind::Vmih, &SolverOptions::default())
        .unwrap();
    let d = finite_diff_rates(&sample_dataset(&path, 400).unwrap()).unwrap();
    assert_eq!(add_noise(&d, 0.0, 1).unwrap(), d);
    let a = add_noise(&d, 0.01, 7).unwrap();
    let b = add_noise(&d, 0.01, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.meta.noise_seed, Some(7));
    let amp = d.sig.iter().fold(0.0_f64, |m, x| m.max(x.v[0].abs()));
    let resid: Vec<f64> = a.sig.iter().zip(&d.sig).map(|(x, y)| x.v[0] - y.v[0]).collect();
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / (0.01 * amp) - 1.0).abs() < 0.1, "sd ratio {}", sd / (0.01 * amp));
    // rates were recomputed from the noisy signal
    assert_ne!(a.sig_dot, d.sig_dot);
}

#[test]
fn csv_round_trip() {
    let path = integrate(&vmih_program(), &MaterialParams::vmih(), ModelKind::Vmih, &SolverOptions::default())
        .unwrap();
    let d = prepare(&path, 50, 0.01, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("data.csv");
    export(&d, &f).unwrap();
    let back = import(&f).unwrap();
    assert_eq!(back, d);
    assert_eq!(back.meta.true_params, Some(MaterialParams::vmih()));

    let text = std::fs::read_to_string(&f).unwrap();
    let bad = text.replacen("dsig_12", "dsig_xx", 1);
    std::fs::write(&f, bad).unwrap();
    match import(&f) {
        Err(Error::Parse(msg)) => assert!(msg.contains("dsig_12"), "{msg}"),
        other => panic!("expected parse error, got {other:?}"),
    }

    export(&d, &f).unwrap();
    let side = f.with_extension("json");
    let js = std::fs::read_to_string(&side).unwrap().replace("ds-v1", "ds-v0");
    std::fs::write(&side, js).unwrap();
    assert!(matches!(import(&f), Err(Error::SchemaVersionMismatch { .. })));
}
