//! Shared fixtures for the integration and acceptance suites.

#![allow(dead_code)]

use bmkam::driver::{build_schedule, frequency_bounds, KamOptions, KamProblem, Schedule, ScheduleInputs};
use bmkam::fourier::{Domain, FourierTaylor};
use bmkam::singular::{ActionAngleForm, BmFunction, SingularPart};
use num_complex::Complex64;

pub const GOLDEN: f64 = 1.618_033_988_749_894_9;

/// The desk model: n = 2, m = 1, c = (1),
/// hhat = log I1 + (I1 - 1)^2/2 + I2^2/2, base torus at I0 = (1, golden).
pub struct DeskModel {
    pub form: ActionAngleForm,
    pub hhat: BmFunction,
    pub i0: Vec<f64>,
    pub domain: Domain,
}

pub fn desk_model(box_halfwidth: f64) -> DeskModel {
    let i0 = vec![1.0, GOLDEN];
    let form = ActionAngleForm::new(2, 1, vec![1.0], 1.0).unwrap();
    let mut smooth = FourierTaylor::zero(2, 64, 8, i0.clone());
    // (I1 - 1)^2 / 2
    smooth.add_term(&[0, 0], &[2, 0], Complex64::new(0.5, 0.0));
    // I2^2 / 2 about I2 = golden
    smooth.add_term(&[0, 0], &[0, 0], Complex64::new(0.5 * GOLDEN * GOLDEN, 0.0));
    smooth.add_term(&[0, 0], &[0, 1], Complex64::new(GOLDEN, 0.0));
    smooth.add_term(&[0, 0], &[0, 2], Complex64::new(0.5, 0.0));
    let hhat = BmFunction::with_singular(SingularPart::new(1, 1.0, vec![]).unwrap(), smooth);
    let domain = Domain::new(
        vec![i0[0] - box_halfwidth, i0[1] - box_halfwidth],
        vec![i0[0] + box_halfwidth, i0[1] + box_halfwidth],
        2.0,
        0.1,
    )
    .unwrap();
    DeskModel {
        form,
        hhat,
        i0,
        domain,
    }
}

/// Zero-average trigonometric perturbation of size `eps` on the desk model.
pub fn desk_perturbation(eps: f64, i0: &[f64]) -> BmFunction {
    let mut f = FourierTaylor::zero(2, 64, 8, i0.to_vec());
    f.add_cos(&[1, 1], &[0, 0], 0.5 * eps);
    f.add_cos(&[0, 1], &[0, 0], 0.5 * eps);
    BmFunction::smooth(f)
}

pub fn desk_schedule(model: &DeskModel, q_max: usize) -> Schedule {
    let (m_bound, l_bound, mu) = frequency_bounds(
        &model.hhat.smooth,
        model.hhat.singular.as_ref(),
        &model.form,
        &model.domain,
        4,
    )
    .unwrap();
    build_schedule(&ScheduleInputs {
        m_bound,
        l_bound,
        mu,
        rho1: 2.0,
        rho2: 0.1,
        tau: 1.1,
        gamma: 1.5,
        nu: 0.8,
        n: 2,
        q_max,
    })
    .unwrap()
}

pub fn desk_problem(eps: f64, box_halfwidth: f64) -> (KamProblem, Schedule) {
    let model = desk_model(box_halfwidth);
    let schedule = desk_schedule(&model, 6);
    let problem = KamProblem {
        form: model.form.clone(),
        hhat: model.hhat.clone(),
        perturbation: desk_perturbation(eps, &model.i0),
        domain: model.domain.clone(),
    };
    (problem, schedule)
}

pub fn default_opts() -> KamOptions {
    KamOptions::default()
}

/// Deterministic xorshift for quick random test data.
pub struct TinyRng(pub u64);

impl TinyRng {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 % 1_000_000) as f64 / 1_000_000.0
    }

    /// Uniform in [-1, 1).
    pub fn sym(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn int(&mut self, lo: i32, hi: i32) -> i32 {
        lo + (self.next_f64() * ((hi - lo + 1) as f64)) as i32
    }
}

/// Random real trigonometric polynomial with modes up to `k_max` in l1 norm
/// and polynomial action dependence of total degree <= 2 (without action
/// dependence every pair of such functions would Poisson-commute).
pub fn random_trig_poly(
    rng: &mut TinyRng,
    n: usize,
    k_max: i32,
    terms: usize,
    amp: f64,
    i0: &[f64],
) -> FourierTaylor {
    let mut f = FourierTaylor::zero(n, 4 * k_max.max(4), 6, i0.to_vec());
    for t in 0..terms {
        let mut k = vec![0i32; n];
        loop {
            for kj in k.iter_mut() {
                *kj = rng.int(-k_max, k_max);
            }
            let l1: i32 = k.iter().map(|x| x.abs()).sum();
            if l1 > 0 && l1 <= k_max {
                break;
            }
        }
        let mut e = vec![0u8; n];
        if t % 3 != 0 {
            e[rng.int(0, n as i32 - 1) as usize] = rng.int(1, 2) as u8;
        }
        f.add_cos(&k, &e, amp * rng.sym());
        f.add_sin(&k, &e, amp * rng.sym());
        // a purely radial term so the k = 0 block is exercised too
        if t == 0 {
            let mut e0 = vec![0u8; n];
            e0[rng.int(0, n as i32 - 1) as usize] = 1;
            f.add_term(&vec![0; n], &e0, num_complex::Complex64::new(amp * rng.sym(), 0.0));
        }
    }
    f
}
