// Float helpers that work without std. libm is pure software, so results are
// identical on every platform.

#[inline]
pub(crate) fn sqrt(v: f64) -> f64 {
    libm::sqrt(v)
}

#[inline]
pub(crate) fn abs(v: f64) -> f64 {
    libm::fabs(v)
}

#[inline]
pub(crate) fn exp(v: f64) -> f64 {
    libm::exp(v)
}

#[inline]
pub(crate) fn pow(base: f64, e: f64) -> f64 {
    libm::pow(base, e)
}
