use consensus_core::{Bernoulli, Message, Moments, MvGaussian};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn naturals_close(a: &Message, b: &Message, tol: f64) -> bool {
    let (x, y) = (a.natural_parameters(), b.natural_parameters());
    x.len() == y.len() && x.iter().zip(&y).all(|(p, q)| close(*p, *q, tol))
}

fn scalar() -> impl Strategy<Value = (f64, f64)> {
    (-5.0..5.0f64, 0.01..10.0f64)
}

fn spd2() -> impl Strategy<Value = (Vec<f64>, DMatrix<f64>)> {
    (
        prop::collection::vec(-5.0..5.0f64, 2),
        prop::collection::vec(-1.0..1.0f64, 4),
        0.05..1.0f64,
    )
        .prop_map(|(m, a, jitter)| {
            let a = DMatrix::from_row_slice(2, 2, &a);
            (m, &a * a.transpose() + DMatrix::identity(2, 2) * jitter)
        })
}

fn mv(mean: &[f64], cov: &DMatrix<f64>) -> Message {
    Message::MvGaussian(MvGaussian::from_mean_covariance(&DVector::from_column_slice(mean), cov))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gaussian_product_matches_precision_weighting((m1, v1) in scalar(), (m2, v2) in scalar()) {
        let p = Message::gaussian(m1, v1).multiply(&Message::gaussian(m2, v2)).unwrap();
        let prec = 1.0 / v1 + 1.0 / v2;
        let Message::Gaussian(g) = &p else { panic!("family changed") };
        prop_assert!(close(g.variance(), 1.0 / prec, TOL));
        prop_assert!(close(g.mean(), (m1 / v1 + m2 / v2) / prec, TOL));
    }

    #[test]
    fn quotient_undoes_product((m1, v1) in scalar(), (m2, v2) in scalar(), p in 0.01..0.99f64, q in 0.01..0.99f64) {
        let (a, b) = (Message::gaussian(m1, v1), Message::gaussian(m2, v2));
        prop_assert!(naturals_close(&a.multiply(&b).unwrap().divide(&b).unwrap(), &a, TOL));
        let (a, b) = (Message::bernoulli(p), Message::bernoulli(q));
        prop_assert!(naturals_close(&a.multiply(&b).unwrap().divide(&b).unwrap(), &a, TOL));
    }

    #[test]
    fn vector_quotient_undoes_product((ma, ca) in spd2(), (mb, cb) in spd2()) {
        let (a, b) = (mv(&ma, &ca), mv(&mb, &cb));
        prop_assert!(naturals_close(&a.multiply(&b).unwrap().divide(&b).unwrap(), &a, 1e-9));
    }

    #[test]
    fn bernoulli_product_is_normalised_pointwise_product(p in 0.01..0.99f64, q in 0.01..0.99f64) {
        let Message::Bernoulli(b) = Message::bernoulli(p).multiply(&Message::bernoulli(q)).unwrap() else {
            panic!("family changed")
        };
        prop_assert!(close(b.probability(), p * q / (p * q + (1.0 - p) * (1.0 - q)), TOL));
    }

    #[test]
    fn moments_round_trip((m, v) in scalar(), (mm, c) in spd2(), p in 0.01..0.99f64) {
        for msg in [Message::gaussian(m, v), mv(&mm, &c), Message::bernoulli(p)] {
            let back = Message::from_moments(msg.family(), &msg.moments().unwrap()).unwrap();
            prop_assert!(naturals_close(&back, &msg, 1e-9));
        }
    }

    #[test]
    fn gaussian_moments_are_mean_and_second_moment((m, v) in scalar()) {
        match Message::gaussian(m, v).moments().unwrap() {
            Moments::Scalar { mean, second } => {
                prop_assert!(close(mean, m, TOL));
                prop_assert!(close(second, v + m * m, TOL));
            }
            other => prop_assert!(false, "unexpected moments {other:?}"),
        }
    }

    #[test]
    fn moment_average_pools_first_two_moments(parts in prop::collection::vec(scalar(), 1..6)) {
        let msgs: Vec<Message> = parts.iter().map(|&(m, v)| Message::gaussian(m, v)).collect();
        let Message::Gaussian(g) = Message::moment_average(&msgs).unwrap() else { panic!("family changed") };
        let n = parts.len() as f64;
        let mean = parts.iter().map(|p| p.0).sum::<f64>() / n;
        let second = parts.iter().map(|p| p.1 + p.0 * p.0).sum::<f64>() / n;
        prop_assert!(close(g.mean(), mean, TOL));
        prop_assert!(close(g.variance(), second - mean * mean, TOL));
    }

    #[test]
    fn moment_average_of_copies_is_identity((m, v) in scalar(), k in 1usize..5) {
        let msgs = vec![Message::gaussian(m, v); k];
        prop_assert!(naturals_close(&Message::moment_average(&msgs).unwrap(), &msgs[0], TOL));
    }

    #[test]
    fn damping_interpolates_natural_parameters((m1, v1) in scalar(), (m2, v2) in scalar(), alpha in 0.05..1.0f64) {
        let (old, new) = (Message::gaussian(m1, v1), Message::gaussian(m2, v2));
        let d = Message::damp(&old, &new, alpha).unwrap();
        let (o, n, got) = (old.natural_parameters(), new.natural_parameters(), d.natural_parameters());
        for i in 0..2 {
            prop_assert!(close(got[i], alpha * n[i] + (1.0 - alpha) * o[i], TOL));
        }
        let b = Message::damp(&Message::bernoulli(0.3), &Message::Bernoulli(Bernoulli::from_probability(0.8)), 1.0).unwrap();
        prop_assert!(naturals_close(&b, &Message::bernoulli(0.8), TOL));
    }

    #[test]
    fn serialization_round_trips_bitwise((m, v) in scalar(), (mm, c) in spd2(), p in 0.01..0.99f64) {
        for msg in [Message::gaussian(m, v), mv(&mm, &c), Message::bernoulli(p), Message::scalar_point(m)] {
            let back: Message = serde_json::from_str(&serde_json::to_string(&msg).unwrap()).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}

#[test]
fn uniform_is_the_product_identity() {
    let g = Message::gaussian(1.5, 0.3);
    let u = Message::uniform(g.family());
    assert!(naturals_close(&g.multiply(&u).unwrap(), &g, 0.0));
    assert!(naturals_close(&g.divide(&u).unwrap(), &g, 0.0));
}

#[test]
fn mismatched_families_are_rejected() {
    assert!(Message::gaussian(0.0, 1.0).multiply(&Message::bernoulli(0.5)).is_err());
    assert!(Message::moment_average(&[]).is_err());
}
