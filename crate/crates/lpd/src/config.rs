use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const KERNEL_SIZE: usize = 3;

/// Architecture of the unrolled network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub n_phases: usize,
    /// Hidden widths of the per-event dual MLP.
    pub dual_widths: [usize; 2],
    /// Primal CNN channels, from the 2-channel input to the 1-channel output.
    pub channels: Vec<usize>,
    /// One parameter set reused by every phase.
    pub shared_weights: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_phases: 8,
            dual_widths: [64, 16],
            channels: vec![2, 64, 128, 256, 64, 1],
            shared_weights: false,
        }
    }
}

impl NetworkConfig {
    pub fn with_phases(mut self, n_phases: usize) -> Self {
        self.n_phases = n_phases;
        self
    }

    pub fn with_channels(mut self, channels: Vec<usize>) -> Self {
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::InvalidConfig(
                "primal CNN needs at least one layer".into(),
            ));
        }
        if self.channels[0] != 2 || *self.channels.last().expect("nonempty") != 1 {
            return Err(Error::InvalidConfig(format!(
                "channels must start at 2 and end at 1, got {:?}",
                self.channels
            )));
        }
        if self.channels.contains(&0) || self.dual_widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Number of distinct parameter sets.
    pub fn n_sets(&self) -> usize {
        if self.shared_weights {
            1
        } else {
            self.n_phases
        }
    }

    /// Parameter set used by `phase`.
    pub fn set_of(&self, phase: usize) -> usize {
        if self.shared_weights {
            0
        } else {
            phase
        }
    }

    pub fn n_conv_layers(&self) -> usize {
        self.channels.len() - 1
    }

    /// Truncated SHA-256 of the architecture.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"listrecon-lpd-v1");
        h.update((self.n_phases as u64).to_le_bytes());
        for w in self.dual_widths {
            h.update((w as u64).to_le_bytes());
        }
        h.update((self.channels.len() as u64).to_le_bytes());
        for c in &self.channels {
            h.update((*c as u64).to_le_bytes());
        }
        h.update((KERNEL_SIZE as u64).to_le_bytes());
        h.update([self.shared_weights as u8]);
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
    }
}

/// Batch-normalization behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with the statistics of the current instance.
    Train,
    /// Normalize with running statistics.
    Eval,
}
