//! Scenario files, preset pipelines, CSV output with provenance, run
//! records and replay.

mod config;
mod csvio;
mod presets;
mod record;
mod units;

pub use config::{
    load_config, parse_config, to_toml, IntegratorSettings, IonSource, LoadCurveSettings,
    RateScanSettings, Scans, ScenarioConfig, SpectrumSettings, VoltageSweep, VolumeScan,
};
pub use csvio::{first_difference, read_csv, write_csv, CellDifference, CsvTable, Provenance};
pub use presets::{
    calibrate, measurement_setup, run_preset, source_weights, spectrum_scan, Calibrated, Preset,
};
pub use record::{
    replay, run_scenario, FileVerdict, OutputLock, ReplayReport, RunOptions, RunRecord,
    TOOL_VERSION,
};
pub use units::{format_quantity, parse_quantity, Dimension};
