//! Unitary discrete Fourier transforms backed by `rustfft`.
//!
//! Both directions carry a `1/√L` scale so every transform in the crate is
//! energy preserving. Plans are cached per thread, keyed by scalar type,
//! length and direction.

use std::any::{Any, TypeId};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::counters;
use crate::error::{Error, Result};
use crate::scalar::Real;

type PlanKey = (TypeId, usize, bool);

thread_local! {
    static PLANS: RefCell<HashMap<PlanKey, Box<dyn Any>>> = RefCell::new(HashMap::new());
}

fn plan<T: Real>(len: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    let key = (TypeId::of::<T>(), len, inverse);
    PLANS.with(|plans| {
        let mut plans = plans.borrow_mut();
        let entry = plans.entry(key).or_insert_with(|| {
            let mut planner = FftPlanner::<T>::new();
            let fft = if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            };
            Box::new(fft)
        });
        entry
            .downcast_ref::<Arc<dyn Fft<T>>>()
            .expect("plan cache keyed by TypeId")
            .clone()
    })
}

/// Unitary DFT of `x`; `inverse` selects the `e^{+j…}` kernel.
pub fn dft<T: Real>(x: &[Complex<T>], inverse: bool) -> Result<Vec<Complex<T>>> {
    if x.is_empty() {
        return Err(Error::invalid("dft of zero-length input"));
    }
    let mut buf = x.to_vec();
    dft_in_place(&mut buf, inverse);
    Ok(buf)
}

/// In-place unitary DFT. Empty buffers are left untouched.
pub fn dft_in_place<T: Real>(buf: &mut [Complex<T>], inverse: bool) {
    let len = buf.len();
    if len == 0 {
        return;
    }
    counters::record_active(counters::transform_cost(len));
    if len > 1 {
        plan::<T>(len, inverse).process(buf);
    }
    let scale = T::one() / T::from_usize_lossy(len).sqrt();
    for v in buf.iter_mut() {
        *v = v.scale(scale);
    }
}

/// Unnormalised forward/inverse DFT, for callers that fold the scale into
/// another factor. Cost is still attributed to the active stage.
pub(crate) fn dft_raw_in_place<T: Real>(buf: &mut [Complex<T>], inverse: bool) {
    let len = buf.len();
    if len <= 1 {
        return;
    }
    counters::record_active(counters::transform_cost(len));
    plan::<T>(len, inverse).process(buf);
}
