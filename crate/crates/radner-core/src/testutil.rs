//! Shared fixtures for the unit tests.

/// Trading targets of the 20-agent demonstration scenario (zero endowments,
/// zero supply, zero expected dividend, cost proportion 0.2, unit horizon,
/// constant urgency 0.1, uniform trading schedule).
pub(crate) const DEMO_TARGETS: [f64; 20] = [
    -300.0, -202.0, -165.0, -102.0, -75.0, -60.0, -35.0, -20.0, -15.0, 0.0, 6.0, 11.0, 23.0,
    30.0, 63.0, 70.0, 115.0, 150.0, 220.0, 290.0,
];
