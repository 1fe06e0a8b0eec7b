//! Per-block score record shared by all scoring methods.

/// Outcome status of scoring one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreStatus {
    Scored,
    /// Block dimensions too close to the sample count for a valid test.
    Untestable,
    /// Sparse fit assigned no weight to any SNP in the block.
    EmptySupport,
}

#[derive(Debug, Clone)]
pub struct BlockScore {
    pub block_id: usize,
    pub score: f64,
    pub p_value: Option<f64>,
    /// One weight per SNP column of the scored block (method-specific scale).
    pub snp_weights: Vec<f64>,
    pub status: ScoreStatus,
}

impl BlockScore {
    pub fn scored(score: f64, p_value: Option<f64>, snp_weights: Vec<f64>) -> Self {
        BlockScore {
            block_id: usize::MAX,
            score,
            p_value,
            snp_weights,
            status: ScoreStatus::Scored,
        }
    }

    pub fn untestable(n_snps: usize) -> Self {
        BlockScore {
            block_id: usize::MAX,
            score: f64::NEG_INFINITY,
            p_value: None,
            snp_weights: vec![0.0; n_snps],
            status: ScoreStatus::Untestable,
        }
    }

    pub fn empty_support(n_snps: usize) -> Self {
        BlockScore {
            block_id: usize::MAX,
            score: 0.0,
            p_value: None,
            snp_weights: vec![0.0; n_snps],
            status: ScoreStatus::EmptySupport,
        }
    }

    pub fn with_block_id(mut self, id: usize) -> Self {
        self.block_id = id;
        self
    }
}
