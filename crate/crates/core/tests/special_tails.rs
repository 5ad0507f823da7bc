//! Distribution tails against mpmath values frozen in `data/tail_oracle.json`
//! (regenerate with `data/gen_tail_oracle.py`).

use sepsis_xai::special::{binomial_sf, chi_squared_sf, f_sf, student_t_two_sided};
use serde_json::Value;

fn oracle() -> Value {
    serde_json::from_str(include_str!("data/tail_oracle.json")).unwrap()
}

fn worst(points: &[Value], f: impl Fn(&Value) -> f64) -> f64 {
    points
        .iter()
        .map(|p| (f(p) - p["p"].as_f64().unwrap()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn chi_squared_tail() {
    let o = oracle();
    let pts = o["chi_squared"].as_array().unwrap();
    assert_eq!(pts.len(), 50);
    let err = worst(pts, |p| {
        chi_squared_sf(p["x"].as_f64().unwrap(), p["df"].as_f64().unwrap())
    });
    assert!(err < 1e-10, "max abs error {err:e}");
}

#[test]
fn student_t_tail() {
    let o = oracle();
    let pts = o["student_t"].as_array().unwrap();
    let err = worst(pts, |p| {
        student_t_two_sided(p["t"].as_f64().unwrap(), p["df"].as_f64().unwrap())
    });
    assert!(err < 1e-10, "max abs error {err:e}");
}

#[test]
fn f_tail() {
    let o = oracle();
    let pts = o["f"].as_array().unwrap();
    let err = worst(pts, |p| {
        f_sf(
            p["f"].as_f64().unwrap(),
            p["d1"].as_f64().unwrap(),
            p["d2"].as_f64().unwrap(),
        )
    });
    assert!(err < 1e-10, "max abs error {err:e}");
}

#[test]
fn binomial_tail() {
    let o = oracle();
    let pts = o["binomial"].as_array().unwrap();
    let err = worst(pts, |p| {
        binomial_sf(
            p["k"].as_u64().unwrap(),
            p["n"].as_u64().unwrap(),
            p["p0"].as_f64().unwrap(),
        )
    });
    assert!(err < 1e-10, "max abs error {err:e}");
}
