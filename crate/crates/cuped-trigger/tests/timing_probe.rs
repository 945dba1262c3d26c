// temporary timing probe - will be deleted
use cuped_trigger::inference::{bootstrap, BootstrapConfig, RngKey, WeightSpec};
use cuped_trigger::sim::{generate, mask_to_one_sided, DgpParams};
use std::time::Instant;

#[test]
fn probe() {
    let params = DgpParams::default();
    let t0 = Instant::now();
    let ds2 = generate(&params, RngKey::new(1)).unwrap();
    eprintln!("generate: {:?}", t0.elapsed());
    let t0 = Instant::now();
    let ds1 = mask_to_one_sided(&ds2, &[]).unwrap();
    eprintln!("mask: {:?}", t0.elapsed());

    let spec = WeightSpec::Principal { covariates: vec!["x_1".into(), "x_2".into()] };
    let config = BootstrapConfig { b: 50, ..BootstrapConfig::default() };
    let t0 = Instant::now();
    let boot = bootstrap(&ds1, &spec, &config, RngKey::new(2)).unwrap();
    eprintln!("bootstrap principal B=50 (parallel): {:?}  ({:?}/resample)", t0.elapsed(), t0.elapsed() / 50);
    eprintln!("theta {}", boot.theta_hat);

    let spec0 = WeightSpec::ConstantZero;
    let t0 = Instant::now();
    let _ = bootstrap(&ds1, &spec0, &config, RngKey::new(2)).unwrap();
    eprintln!("bootstrap constant-zero B=50 (draw cost only): {:?} ({:?}/resample)", t0.elapsed(), t0.elapsed() / 50);

    let spec_e = WeightSpec::EntropyBalance { columns: vec!["x_1".into(), "x_2".into()] };
    let t0 = Instant::now();
    let _ = bootstrap(&ds1, &spec_e, &config, RngKey::new(2)).unwrap();
    eprintln!("bootstrap entropy B=50: {:?} ({:?}/resample)", t0.elapsed(), t0.elapsed() / 50);

    let spec_p = WeightSpec::Propensity { covariates: vec!["x_1".into(), "x_2".into()] };
    let t0 = Instant::now();
    let _ = bootstrap(&ds1, &spec_p, &config, RngKey::new(2)).unwrap();
    eprintln!("bootstrap propensity B=50: {:?} ({:?}/resample)", t0.elapsed(), t0.elapsed() / 50);
}
