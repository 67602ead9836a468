//! Decibel and rate conversions.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    linear_to_db(mw)
}

/// SINR needed for a Shannon rate of `bits` bits/s/Hz.
pub fn rate_to_sinr(bits: f64) -> f64 {
    2f64.powf(bits) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((linear_to_db(db_to_linear(-104.0)) + 104.0).abs() < 1e-12);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert_eq!(rate_to_sinr(3.0), 7.0);
    }
}
