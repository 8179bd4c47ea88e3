//! Network topologies and channel-gain datasets.
//!
//! Gains follow a simplified path-loss law `10^-a · d^-b` times an
//! independent unit-mean Rayleigh power fade per (channel, transmitter,
//! receiver). Index 0 is the cellular user (transmitter side) and the base
//! station (receiver side); DUE pair `k` (0-based) occupies index `k + 1`
//! on both sides.

mod channel;
mod config;
mod dataset;
mod io;
mod topology;

pub use channel::{generate_instance, path_gain, sample_fading_power, ChannelInstance};
pub use config::SystemConfig;
pub use dataset::{generate_dataset, generate_dataset_parallel, sample_stream, Dataset, GENERATOR_ID};
pub use io::{export_csv, load_dataset, read_dataset, save_dataset, write_dataset, DATASET_FORMAT_VERSION};
pub use topology::{place_users, Point, Topology, MAX_PLACEMENT_RESAMPLES};

/// Converts a power in dBm to Watts.
pub fn dbm_to_watt(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

/// Inverse of [`dbm_to_watt`].
pub fn watt_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dbm_reference_points() {
        assert!((dbm_to_watt(23.0) - 0.199_526_231_5).abs() < 1e-9);
        assert_eq!(dbm_to_watt(0.0), 0.001);
        // -173 dBm/Hz over 10 MHz
        let noise = dbm_to_watt(-173.0 + 10.0 * 1e7f64.log10());
        assert!((noise / 5.0119e-14 - 1.0).abs() < 1e-4, "{noise}");
        assert!((dbm_to_watt(-103.0) - noise).abs() < 1e-24);
    }

    proptest! {
        #[test]
        fn unit_round_trip(x in -250.0f64..250.0) {
            let back = watt_to_dbm(dbm_to_watt(x));
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
