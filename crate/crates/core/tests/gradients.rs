//! Gradient checks for the losses and networks.
//! Bodies live in `suites/gradients.rs`, shared with the acceptance target.

#[path = "suites/gradients.rs"]
mod suite;

#[test]
fn cycle_loss_gradient() {
    suite::cycle_loss_gradient()
}

#[test]
fn lsgan_gradients() {
    suite::lsgan_gradients()
}

#[test]
fn key_matching_gradient() {
    suite::key_matching_gradient()
}

#[test]
fn information_gradient() {
    suite::information_gradient()
}

#[test]
fn keygen_classification_gradient() {
    suite::keygen_classification_gradient()
}

#[test]
fn generator_parameter_gradients() {
    suite::generator_parameter_gradients()
}

#[test]
fn discriminator_parameter_gradients() {
    suite::discriminator_parameter_gradients()
}

#[test]
fn key_generator_parameter_gradients() {
    suite::key_generator_parameter_gradients()
}
