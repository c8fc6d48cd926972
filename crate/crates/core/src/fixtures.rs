//! Published first-order population and cluster-centroid models.
//!
//! Only the trust dynamics were published; intervention outputs are set to
//! the neutral `C = 0`, `H = 5.5`.

use crate::trust::TrustModelParams;

/// A named published model and the memory length it was identified with.
#[derive(Debug, Clone)]
pub struct PublishedModel {
    pub name: &'static str,
    pub n_q_seconds: f64,
    pub params: TrustModelParams,
}

/// Population model, identified with a 30 s memory.
pub fn population() -> TrustModelParams {
    TrustModelParams::first_order(1.00, 1.00, 13.6, 11.1, 2.32e-2, 2.56e-2)
}

pub fn ambivalent_cluster() -> TrustModelParams {
    TrustModelParams::first_order(9.98e-1, 9.97e-1, 24.2, 8.88, 2.20e-1, 2.58e-1)
}

pub fn pessimistic_cluster() -> TrustModelParams {
    TrustModelParams::first_order(9.88e-1, 9.97e-1, -2.72, -4.78, 9.32e-1, 2.75e-1)
}

pub fn optimistic_cluster() -> TrustModelParams {
    TrustModelParams::first_order(9.96e-1, 9.71e-1, 202.0, 114.0, 4.56e-1, 2.04)
}

pub fn published_models() -> Vec<PublishedModel> {
    vec![
        PublishedModel {
            name: "population",
            n_q_seconds: 30.0,
            params: population(),
        },
        PublishedModel {
            name: "ambivalent",
            n_q_seconds: 90.0,
            params: ambivalent_cluster(),
        },
        PublishedModel {
            name: "pessimistic",
            n_q_seconds: 120.0,
            params: pessimistic_cluster(),
        },
        PublishedModel {
            name: "optimistic",
            n_q_seconds: 90.0,
            params: optimistic_cluster(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_models_are_admissible() {
        for m in published_models() {
            m.params.validate().unwrap();
        }
    }
}
