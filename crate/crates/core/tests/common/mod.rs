#![allow(dead_code)]

pub mod exact;

use pexpand::map::{DirectionField, MapFamily, PiecewiseMap, GOLDEN};
use proptest::prelude::*;

/// Symmetric tent with turning value `h`, bent by `eps x (1 - x^2)`.
pub fn bent_tent(h: f64, eps: f64) -> PiecewiseMap {
    let s = h + 1.0;
    PiecewiseMap::new(vec![h, s + eps, 0.0, -eps], vec![h, -s + eps, 0.0, -eps], 2).unwrap()
}

pub fn valid_map() -> impl Strategy<Value = PiecewiseMap> {
    (0.3f64..=1.0, -0.1f64..=0.1)
        .prop_map(|(h, eps)| bent_tent(h, eps))
        .prop_filter("valid", |f| f.validate().passed)
}

/// Random combination of the standard fields plus a constant.
pub fn field() -> impl Strategy<Value = DirectionField> {
    prop::array::uniform4(-2.0f64..=2.0).prop_map(|[a, b, c, d]| {
        DirectionField::bump()
            .scale(a)
            .add_scaled(&DirectionField::odd_bump(), b)
            .add_scaled(&DirectionField::quartic_bump(), c)
            .add_scaled(&DirectionField::constant(1.0), d)
    })
}

/// `1 - x^2 + a^2 x (1 - x^2)`, horizontal at the golden tent.
pub fn horizontal_field() -> DirectionField {
    DirectionField::bump().add_scaled(&DirectionField::odd_bump(), GOLDEN * GOLDEN)
}

pub fn golden_horizontal_family() -> MapFamily {
    MapFamily::linear(PiecewiseMap::golden_tent(), horizontal_field(), 0.02).unwrap()
}

pub fn golden_transversal_family() -> MapFamily {
    MapFamily::linear(PiecewiseMap::golden_tent(), DirectionField::bump(), 0.02).unwrap()
}

pub fn full_tent_family() -> MapFamily {
    MapFamily::linear(PiecewiseMap::full_tent(), DirectionField::odd_bump(), 0.02).unwrap()
}

/// A period-3 map whose return multiplier times the weaker slope is below 2.
pub fn non_good_map() -> PiecewiseMap {
    PiecewiseMap::new(
        vec![0.2, 1.2],
        vec![
            0.2,
            -3.240201585383513,
            13.261310304992836,
            -48.6248044516404,
            121.562011129101,
            -218.8116200323818,
            291.7488267098424,
            -291.7488267098424,
            218.8116200323818,
            -121.562011129101,
            48.6248044516404,
            -13.261310304992836,
            2.2102183841654726,
            -0.17001679878195944,
        ],
        2,
    )
    .unwrap()
}
