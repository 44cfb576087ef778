//! Published measurements used as clearly-labeled reference rows in reports.
//! These values are reported numbers from the literature, never measured
//! output of this workspace, and the report renderer keeps them in separate
//! reference columns.

/// Reported seconds-per-token against token count (rank 8, billion-scale
/// deployment, 3 Mbps link). The absolute values are not comparable to desk
/// scale; reports compare curve shape only.
pub const REFERENCE_TOKEN_CURVE: [(u32, f64); 6] = [
    (50, 315.586),
    (100, 231.223),
    (200, 188.6815),
    (500, 171.5818),
    (700, 168.355),
    (1000, 160.6188),
];

/// Reported seconds-per-token against adapter rank at 500 tokens.
pub const REFERENCE_RANK_CURVE: [(u32, f64); 4] =
    [(8, 1.715818), (16, 2.49392), (24, 3.36596), (48, 5.6657)];

/// Reported best-case amortized cost on the billion-parameter deployment.
pub const REFERENCE_OPTIMAL_S_PER_TOKEN: f64 = 1.61;

#[derive(Clone, Copy, Debug)]
pub struct ReportedSystem {
    pub year: u16,
    pub scheme: &'static str,
    pub model: &'static str,
    pub parameters: &'static str,
    pub seconds_per_token: Option<f64>,
}

/// Private-inference systems evaluated on sub-billion models.
pub const SMALL_MODEL_SYSTEMS: [ReportedSystem; 5] = [
    ReportedSystem { year: 2022, scheme: "THE-X", model: "Bert-tiny", parameters: "<14.5M", seconds_per_token: None },
    ReportedSystem { year: 2022, scheme: "Iron", model: "Bert-Large", parameters: "340M", seconds_per_token: Some(6000.0) },
    ReportedSystem { year: 2023, scheme: "BumbleBee", model: "GPT2-Base", parameters: "117M", seconds_per_token: Some(204.6) },
    ReportedSystem { year: 2023, scheme: "CipherGPT", model: "GPT2-Base", parameters: "117M", seconds_per_token: Some(1500.0) },
    ReportedSystem { year: 2023, scheme: "PUMA", model: "GPT2-Base", parameters: "117M", seconds_per_token: Some(15.5) },
];

/// Systems evaluated on billion-plus models, including the split-adapter
/// scheme this workspace implements (reported, not measured here).
pub const LARGE_MODEL_SYSTEMS: [ReportedSystem; 3] = [
    ReportedSystem { year: 2023, scheme: "BumbleBee", model: "LLaMA-7B", parameters: "7B", seconds_per_token: Some(832.2) },
    ReportedSystem { year: 2023, scheme: "PUMA", model: "LLaMA-7B", parameters: "7B", seconds_per_token: Some(200.0) },
    ReportedSystem { year: 2024, scheme: "split-adapter (reported)", model: "ChatGLM2", parameters: "6B", seconds_per_token: Some(1.61) },
];
