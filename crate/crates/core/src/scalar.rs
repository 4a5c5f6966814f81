//! Floating-point element types.
//!
//! Every numeric routine is generic over [`Scalar`], implemented for `f64`
//! (oracle and gradient-check precision) and `f32` (training precision).

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

use num_traits::Float;
use rustfft::{Fft, FftNum, FftPlanner};

/// Forward and inverse transform plans of one length.
pub type FftPair<T> = (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>);

pub trait Scalar: Float + FftNum + Default + Debug + Display + Sum + Send + Sync + 'static {
    const NAME: &'static str;

    /// Largest imaginary residue, relative to the output scale, tolerated
    /// after an inverse transform of real-valued data.
    const IMAG_TOLERANCE: f64;

    /// Absolute tolerance at which two composition backends must agree.
    const BACKEND_TOLERANCE: f64;

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Cached forward/inverse plans for `len`, one cache per thread.
    fn fft_plans(len: usize) -> FftPair<Self>;
}

struct PlanCache<T: FftNum> {
    planner: FftPlanner<T>,
    plans: HashMap<usize, FftPair<T>>,
}

impl<T: FftNum> PlanCache<T> {
    fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
        }
    }

    fn get(&mut self, len: usize) -> FftPair<T> {
        if let Some(pair) = self.plans.get(&len) {
            return pair.clone();
        }
        let pair = (self.planner.plan_fft_forward(len), self.planner.plan_fft_inverse(len));
        self.plans.insert(len, pair.clone());
        pair
    }
}

thread_local! {
    static PLANS_F64: RefCell<PlanCache<f64>> = RefCell::new(PlanCache::new());
    static PLANS_F32: RefCell<PlanCache<f32>> = RefCell::new(PlanCache::new());
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    const IMAG_TOLERANCE: f64 = 1e-6;
    const BACKEND_TOLERANCE: f64 = 1e-10;

    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn fft_plans(len: usize) -> FftPair<Self> {
        PLANS_F64.with(|cache| cache.borrow_mut().get(len))
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    const IMAG_TOLERANCE: f64 = 1e-3;
    const BACKEND_TOLERANCE: f64 = 1e-5;

    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn fft_plans(len: usize) -> FftPair<Self> {
        PLANS_F32.with(|cache| cache.borrow_mut().get(len))
    }
}
