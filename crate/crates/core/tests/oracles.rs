//! Metric and resampling values against reference libraries.
//! Bodies live in `suites/oracles.rs`, shared with the acceptance target.

#[path = "suites/oracles.rs"]
mod suite;

#[test]
fn ssim_matches_scikit_image() {
    suite::ssim_matches_scikit_image()
}

#[test]
fn frechet_of_unit_gaussians_one_apart() {
    suite::frechet_of_unit_gaussians_one_apart()
}

#[test]
fn frechet_matches_closed_form_for_diagonal_covariances() {
    suite::frechet_matches_closed_form_for_diagonal_covariances()
}

#[test]
fn perceptual_distance_grows_with_distortion() {
    suite::perceptual_distance_grows_with_distortion()
}

#[test]
fn bilinear_resize_matches_reference() {
    suite::bilinear_resize_matches_reference()
}
