use emi_bem::integrator::{simulate, Recording, SplitRhs, StepperConfig};
use emi_bem::ionic::{builtin_models, eval_rhs, FitzHughNagumo, IonicModel, MembraneState, MitchellSchaeffer, Stimulus};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Scalar Mitchell–Schaeffer current from its defining formulas, with the
/// default constants written out.
fn ms_current(v: f64, h: f64) -> f64 {
    let u = (v + 85.0) / 100.0;
    -100.0 * (h * u * u * (1.0 - u) / 0.3 - u / 6.0)
}

fn fhn_current(v: f64, w: f64) -> f64 {
    let x = (v + 30.0) / 30.0;
    -30.0 * (x - x.powi(3) / 3.0 - w)
}

/// `x − x³/3 − (x + a)/b = 0` by bisection on the branch left of −1.
fn fhn_rest_by_bisection() -> (f64, f64) {
    let f = |x: f64| x - x.powi(3) / 3.0 - (x + 0.7) / 0.8;
    let (mut lo, mut hi) = (-3.0, -1.0);
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, (x + 0.7) / 0.8)
}

#[test]
fn declared_rest_states_are_equilibria() {
    for m in builtin_models() {
        let (v, z) = m.rest();
        let nodes = 5;
        let state = MembraneState::at_rest(m.as_ref(), nodes);
        assert_eq!(state.v, vec![v; nodes]);
        let (i_ion, g, i_stim) = eval_rhs(m.as_ref(), &state.v, &state.z, 0.0, &Stimulus::none()).unwrap();
        assert!(i_ion.iter().chain(&g).all(|x| x.abs() < 1e-10), "{}", m.name());
        assert!(i_stim.iter().all(|x| *x == 0.0));
        let (lo, hi) = m.v_range();
        assert!(lo < v && v < hi);
        assert_eq!(z.len(), m.n_state());
    }
    let ms = MitchellSchaeffer::default();
    assert_eq!(ms.rest(), (-85.0, vec![1.0]));
}

#[test]
fn fitzhugh_nagumo_rest_is_the_fixed_point() {
    let m = FitzHughNagumo::default();
    let (x, w) = fhn_rest_by_bisection();
    let (v, z) = m.rest();
    assert!((v - (-30.0 + 30.0 * x)).abs() < 1e-10, "{v} vs {}", -30.0 + 30.0 * x);
    assert!((z[0] - w).abs() < 1e-12);
    assert!(m.i_ion(v, &z).abs() < 1e-10);
    // stable: the Jacobian at the fixed point has negative trace and positive determinant
    let (a11, a12, a21, a22) = (1.0 - x * x, -1.0, 0.08, -0.08 * 0.8);
    assert!(a11 + a22 < 0.0 && a11 * a22 - a12 * a21 > 0.0);
}

#[test]
fn stimulus_window() {
    let s = Stimulus::new(-300.0, 2.0, 1.0, vec![1, 3]).unwrap();
    let m = MitchellSchaeffer::default();
    let state = MembraneState::at_rest(&m, 4);
    let at = |t| eval_rhs(&m, &state.v, &state.z, t, &s).unwrap().2;
    assert_eq!(at(2.5), vec![0.0, -300.0, 0.0, -300.0]);
    assert_eq!(at(2.0), vec![0.0, -300.0, 0.0, -300.0]);
    assert_eq!(at(3.0), vec![0.0; 4]);
    assert_eq!(at(1.999), vec![0.0; 4]);
    assert!(Stimulus::new(-300.0, 0.0, -1.0, vec![]).is_err());
    assert!(Stimulus::new(f64::NAN, 0.0, 1.0, vec![]).is_err());
    let far = Stimulus::new(-1.0, 0.0, 1.0, vec![4]).unwrap();
    assert!(eval_rhs(&m, &state.v, &state.z, 0.0, &far).is_err());
    assert!(eval_rhs(&m, &state.v, &state.z[..3], 0.0, &s).is_err());
}

#[test]
fn displaced_voltage_matches_scalar_formulas() {
    let ms = MitchellSchaeffer::default();
    let (v0, z0) = ms.rest();
    let v = v0 + 30.0;
    let got = ms.i_ion(v, &z0);
    assert!((got - ms_current(v, z0[0])).abs() < 1e-12);
    // above the excitation threshold the open gate gives an inward current
    assert!(got < 0.0);
    assert!((got + 16.0).abs() < 1e-12);

    let fhn = FitzHughNagumo::default();
    let (v0, z0) = fhn.rest();
    let v = v0 + 30.0;
    let got = fhn.i_ion(v, &z0);
    assert!((got - fhn_current(v, z0[0])).abs() < 1e-12);
    assert!(got < 0.0, "a +30 mV kick lies on the excitable branch");

    // gating right-hand sides
    let mut g = [0.0];
    ms.gating(-80.0, &[0.4], &mut g);
    assert!((g[0] - 0.6 / 120.0).abs() < 1e-15);
    ms.gating(0.0, &[0.4], &mut g);
    assert!((g[0] + 0.4 / 150.0).abs() < 1e-15);
    fhn.gating(0.0, &[0.2], &mut g);
    assert!((g[0] - 0.08 * (1.0 + 0.7 - 0.8 * 0.2)).abs() < 1e-15);
}

#[test]
fn nan_reports_the_node() {
    let m = FitzHughNagumo::default();
    let (v, z) = m.rest();
    let err = eval_rhs(&m, &[v, v, f64::NAN], &[z[0]; 3], 0.0, &Stimulus::none()).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

/// Classical RK4 on one uncoupled node.
fn reference_ode(m: &dyn IonicModel, stim: &Stimulus, t_end: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let ns = m.n_state();
    let (v0, z0) = m.rest();
    let mut y: Vec<f64> = std::iter::once(v0).chain(z0).collect();
    let rhs = |y: &[f64], t: f64| -> Vec<f64> {
        let mut out = vec![0.0; 1 + ns];
        let mut cur = [0.0];
        stim.current(t, &mut cur);
        out[0] = -(m.i_ion(y[0], &y[1..]) + cur[0]);
        m.gating(y[0], &y[1..], &mut out[1..]);
        out
    };
    let n = (t_end / dt).round() as usize;
    let (mut ts, mut vs) = (vec![0.0], vec![y[0]]);
    for k in 0..n {
        let t = k as f64 * dt;
        let k1 = rhs(&y, t);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(&y2, t + 0.5 * dt);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = rhs(&y3, t + 0.5 * dt);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(&y4, t + dt);
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        ts.push(t + dt);
        vs.push(y[0]);
    }
    (ts, vs)
}

fn upcrossing(ts: &[f64], vs: &[f64], level: f64) -> Option<f64> {
    (1..vs.len())
        .find(|&k| vs[k - 1] < level && vs[k] >= level)
        .map(|k| ts[k - 1] + (level - vs[k - 1]) / (vs[k] - vs[k - 1]) * (ts[k] - ts[k - 1]))
}

#[test]
fn single_node_action_potential() {
    for (m, t_end) in [
        (Box::new(MitchellSchaeffer::default()) as Box<dyn IonicModel>, 600.0),
        (Box::new(FitzHughNagumo::default()), 200.0),
    ] {
        let stim = Stimulus::new(-50.0, 1.0, 1.0, vec![0]).unwrap();
        let (v_rest, _) = m.rest();
        let (ts, vs) = reference_ode(m.as_ref(), &stim, t_end, 1e-3);
        let peak = vs.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak > v_rest + 60.0, "{}: reference peak {peak}", m.name());
        let ref_up = upcrossing(&ts, &vs, -20.0).expect("reference upstroke");

        let zero = DMatrix::zeros(1, 1);
        let rhs = SplitRhs::from_matrix(zero, m.as_ref(), &stim, 1.0).unwrap();
        let mut rec = Recording::new(t_end, vec![0]);
        rec.threshold = -20.0;
        let cfg = StepperConfig {
            dt: 0.01,
            ..StepperConfig::default()
        };
        let tr = simulate(MembraneState::at_rest(m.as_ref(), 1), &rhs, &cfg, &rec).unwrap();
        assert!(tr.failure.is_none());
        let up = tr.activation[0].expect("upstroke");
        assert!((up - ref_up).abs() < 0.01 * ref_up, "{}: {up} vs {ref_up}", m.name());
        let v_end = tr.final_state.v[0];
        let ref_end = *vs.last().unwrap();
        assert!((v_end - v_rest).abs() < 0.01 * v_rest.abs(), "{}: ends at {v_end}", m.name());
        assert!((ref_end - v_rest).abs() < 0.01 * v_rest.abs(), "{}: reference ends at {ref_end}", m.name());
        let top = tr.probe_v.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
        assert!((top - peak).abs() < 0.01 * (peak - v_rest), "{}: peak {top} vs {peak}", m.name());
    }
}

#[test]
fn gates_stay_bounded_along_an_action_potential() {
    let m = MitchellSchaeffer::default();
    let stim = Stimulus::new(-50.0, 1.0, 1.0, vec![0]).unwrap();
    let rhs = SplitRhs::from_matrix(DMatrix::zeros(1, 1), &m, &stim, 1.0).unwrap();
    let mut rec = Recording::new(400.0, vec![0]);
    rec.snapshots = (0..40).map(|k| 10.0 * k as f64).collect();
    let tr = simulate(MembraneState::at_rest(&m, 1), &rhs, &StepperConfig::default(), &rec).unwrap();
    assert_eq!(tr.snapshots.len(), 40);
    for s in &tr.snapshots {
        assert!((0.0..=1.0).contains(&s.z[0]), "h = {} at t = {}", s.z[0], s.t);
    }
}

proptest! {
    #[test]
    fn gate_derivatives_point_inward(frac in 0.0f64..1.0) {
        let m = MitchellSchaeffer::default();
        let (lo, hi) = m.v_range();
        let v = lo + frac * (hi - lo);
        let mut g = [0.0];
        m.gating(v, &[0.0], &mut g);
        prop_assert!(g[0] >= 0.0);
        m.gating(v, &[1.0], &mut g);
        prop_assert!(g[0] <= 0.0);
        prop_assert_eq!(m.bounds(), vec![Some((0.0, 1.0))]);
    }

    #[test]
    fn evaluation_is_componentwise(
        v in prop::collection::vec(-100.0f64..20.0, 1..24),
        seed in any::<u64>(),
    ) {
        let n = v.len();
        let z: Vec<f64> = (0..n).map(|k| ((k as f64 + 0.5) / n as f64 + (seed % 7) as f64 * 0.01).min(1.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let stim = Stimulus::new(-10.0, 0.0, 1.0, vec![0]).unwrap();
        let moved = Stimulus::new(-10.0, 0.0, 1.0, vec![perm.iter().position(|&p| p == 0).unwrap()]).unwrap();
        for m in builtin_models() {
            let (a, ga, sa) = eval_rhs(m.as_ref(), &v, &z, 0.5, &stim).unwrap();
            let pv: Vec<f64> = perm.iter().map(|&p| v[p]).collect();
            let pz: Vec<f64> = perm.iter().map(|&p| z[p]).collect();
            let (b, gb, sb) = eval_rhs(m.as_ref(), &pv, &pz, 0.5, &moved).unwrap();
            for (k, &p) in perm.iter().enumerate() {
                prop_assert_eq!(a[p], b[k]);
                prop_assert_eq!(ga[p], gb[k]);
                prop_assert_eq!(sa[p], sb[k]);
            }
        }
    }
}
