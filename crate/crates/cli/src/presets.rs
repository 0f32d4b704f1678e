//! Shipped configurations, embedded so `--preset` works from any directory.
//! The same files live under `presets/` at the repository root.

macro_rules! preset {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../presets/", $name, ".json")))
    };
}

/// `(name, JSON text)` for every preset.
pub const PRESETS: &[(&str, &str)] = &[
    preset!("awgn-p1"),
    preset!("awgn-p0.1"),
    preset!("awgn-p10"),
    preset!("awgn-fixed-lambda"),
    preset!("mimo2x2-p1"),
    preset!("fading-csir-p1"),
    preset!("fading-nocsir-p1"),
    preset!("rd-gaussian"),
    preset!("ba-bsc"),
    preset!("ba-awgn-quantized"),
    preset!("sweep-awgn"),
];

pub fn lookup(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}
