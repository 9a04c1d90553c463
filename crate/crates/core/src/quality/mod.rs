//! Scoring generated epochs by how well a recurrent autoencoder trained on
//! real data reconstructs them.

mod autoencoder;
mod report;

pub use autoencoder::{train_autoencoder, Autoencoder, AutoencoderConfig, AutoencoderModel, AUTOENCODER_KIND};
pub use report::{
    score, Calibration, QualityReport, Verdict, GOOD_THRESHOLD, HISTOGRAM_BINS, POOR_THRESHOLD, UPPER_ANCHOR,
};
