//! Closed-form kernel of the unit disk, `K = 1 / (pi (1 - |z|^2)^2)`.

use super::{radial_jet, KernelJet, KernelProvider, Provenance};
use crate::error::{Error, Result};
use crate::real::{abs2, to_c64, Real};
use num_complex::{Complex, Complex64};
use std::marker::PhantomData;

#[derive(Clone, Copy, Debug, Default)]
pub struct DiskKernel<T>(PhantomData<T>);

impl<T: Real> DiskKernel<T> {
    pub fn new() -> Self {
        Self(PhantomData)
    }
}

impl<T: Real> KernelProvider<T> for DiskKernel<T> {
    fn kernel_jet(&self, z: Complex<T>) -> Result<KernelJet<T>> {
        let t = abs2(z);
        if !(t < T::one()) {
            return Err(Error::domain(to_c64(z), "the unit disk"));
        }
        let u = T::one() / (T::one() - t);
        let mut d = [T::zero(); 6];
        let mut pw = u * u / T::PI();
        let mut fact = T::one();
        for (j, dj) in d.iter_mut().enumerate() {
            fact *= T::ci(j as i64 + 1);
            *dj = fact * pw;
            pw *= u;
        }
        Ok(KernelJet { k: radial_jet(z, &d), truncation_error: 0.0, provenance: Provenance::ClosedForm })
    }

    fn name(&self) -> String {
        "closed-form".into()
    }
}

pub fn disk_kernel_jet(z: Complex64) -> Result<KernelJet<f64>> {
    DiskKernel::<f64>::new().kernel_jet(z)
}
