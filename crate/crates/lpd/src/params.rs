//! Flat parameter storage with a named block layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{NetworkConfig, KERNEL_SIZE};
use crate::error::{Error, Result};

pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Weight,
    Bias,
    PreluSlope,
    BnScale,
    BnShift,
}

/// A named contiguous range of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
    /// Fan-in of the layer the block belongs to.
    pub fan_in: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LinearOffsets {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DualOffsets {
    pub layers: [LinearOffsets; 3],
    pub slopes: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct NormOffsets {
    pub scale: usize,
    pub shift: usize,
    pub slope: usize,
    /// Running mean and variance in the statistics buffer.
    pub running_mean: usize,
    pub running_var: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ConvOffsets {
    pub weight: usize,
    pub bias: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub norm: Option<NormOffsets>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SetOffsets {
    pub dual: DualOffsets,
    pub convs: Vec<ConvOffsets>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
    sets: Vec<SetOffsets>,
    n_values: usize,
    n_stats: usize,
}

struct Builder {
    blocks: Vec<Block>,
    n_values: usize,
    n_stats: usize,
}

impl Builder {
    fn push(&mut self, name: String, kind: BlockKind, len: usize, fan_in: usize) -> usize {
        let offset = self.n_values;
        self.blocks.push(Block {
            name,
            kind,
            offset,
            len,
            fan_in,
        });
        self.n_values += len;
        offset
    }

    fn stats(&mut self, len: usize) -> usize {
        let offset = self.n_stats;
        self.n_stats += len;
        offset
    }
}

impl Layout {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            blocks: Vec::new(),
            n_values: 0,
            n_stats: 0,
        };
        let mut sets = Vec::with_capacity(config.n_sets());
        let k2 = KERNEL_SIZE * KERNEL_SIZE;
        for s in 0..config.n_sets() {
            let widths = [3, config.dual_widths[0], config.dual_widths[1], 1];
            let mut slopes = [0; 2];
            let layers: [LinearOffsets; 3] = std::array::from_fn(|l| {
                let (n_in, n_out) = (widths[l], widths[l + 1]);
                let weight = b.push(
                    format!("phase{s}.dual.fc{}.weight", l + 1),
                    BlockKind::Weight,
                    n_out * n_in,
                    n_in,
                );
                let bias = b.push(
                    format!("phase{s}.dual.fc{}.bias", l + 1),
                    BlockKind::Bias,
                    n_out,
                    n_in,
                );
                if l < 2 {
                    slopes[l] = b.push(
                        format!("phase{s}.dual.prelu{}", l + 1),
                        BlockKind::PreluSlope,
                        1,
                        n_in,
                    );
                }
                LinearOffsets {
                    weight,
                    bias,
                    n_in,
                    n_out,
                }
            });
            let dual = DualOffsets { layers, slopes };

            let n_conv = config.n_conv_layers();
            let mut convs = Vec::with_capacity(n_conv);
            for l in 0..n_conv {
                let (c_in, c_out) = (config.channels[l], config.channels[l + 1]);
                let fan_in = c_in * k2;
                let weight = b.push(
                    format!("phase{s}.primal.conv{}.weight", l + 1),
                    BlockKind::Weight,
                    c_out * fan_in,
                    fan_in,
                );
                let bias = b.push(
                    format!("phase{s}.primal.conv{}.bias", l + 1),
                    BlockKind::Bias,
                    c_out,
                    fan_in,
                );
                let norm = (l + 1 < n_conv).then(|| NormOffsets {
                    scale: b.push(
                        format!("phase{s}.primal.bn{}.weight", l + 1),
                        BlockKind::BnScale,
                        c_out,
                        fan_in,
                    ),
                    shift: b.push(
                        format!("phase{s}.primal.bn{}.bias", l + 1),
                        BlockKind::BnShift,
                        c_out,
                        fan_in,
                    ),
                    slope: b.push(
                        format!("phase{s}.primal.prelu{}", l + 1),
                        BlockKind::PreluSlope,
                        1,
                        fan_in,
                    ),
                    running_mean: b.stats(c_out),
                    running_var: b.stats(c_out),
                });
                convs.push(ConvOffsets {
                    weight,
                    bias,
                    c_in,
                    c_out,
                    norm,
                });
            }
            sets.push(SetOffsets { dual, convs });
        }
        Ok(Self {
            blocks: b.blocks,
            sets,
            n_values: b.n_values,
            n_stats: b.n_stats,
        })
    }

    /// Blocks in declaration order.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn n_stats(&self) -> usize {
        self.n_stats
    }

    pub(crate) fn set(&self, s: usize) -> &SetOffsets {
        &self.sets[s]
    }

    pub(crate) fn running_stat_ranges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sets
            .iter()
            .flat_map(|s| s.convs.iter())
            .filter_map(|c| {
                c.norm
                    .as_ref()
                    .map(|n| (n.running_mean, n.running_var, c.c_out))
            })
    }
}

/// Trainable values plus batch-normalization running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    layout: Layout,
    pub values: Vec<f64>,
    pub running_stats: Vec<f64>,
}

impl NetworkParams {
    /// Kaiming-uniform weights and biases, PReLU slopes 0.25, unit batchnorm scale.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in p.layout.blocks.clone() {
            let bound = 1.0 / (block.fan_in as f64).sqrt();
            for v in &mut p.values[block.range()] {
                *v = match block.kind {
                    BlockKind::Weight | BlockKind::Bias => rng.random_range(-bound..bound),
                    BlockKind::PreluSlope => PRELU_INIT,
                    BlockKind::BnScale => 1.0,
                    BlockKind::BnShift => 0.0,
                };
            }
        }
        Ok(p)
    }

    /// All trainable values zero; running statistics at their initial state.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let layout = Layout::new(config)?;
        let values = vec![0.0; layout.n_values];
        let mut running_stats = vec![0.0; layout.n_stats];
        for (_, var, c) in layout.running_stat_ranges() {
            running_stats[var..var + c].fill(1.0);
        }
        Ok(Self {
            config: config.clone(),
            layout,
            values,
            running_stats,
        })
    }

    pub fn from_parts(
        config: &NetworkConfig,
        values: Vec<f64>,
        running_stats: Vec<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(config)?;
        if values.len() != layout.n_values || running_stats.len() != layout.n_stats {
            return Err(Error::Dimension(format!(
                "expected {} values and {} statistics, got {} and {}",
                layout.n_values,
                layout.n_stats,
                values.len(),
                running_stats.len()
            )));
        }
        Ok(Self {
            config: config.clone(),
            layout,
            values,
            running_stats,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.blocks.iter().find(|b| b.name == name)?.range();
        Some(&mut self.values[range])
    }

    pub fn all_finite(&self) -> bool {
        self.values
            .iter()
            .chain(&self.running_stats)
            .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts_match_architecture() {
        let cfg = NetworkConfig::default().with_phases(2);
        let layout = Layout::new(&cfg).unwrap();
        let dual = 3 * 64 + 64 + 1 + 64 * 16 + 16 + 1 + 16 + 1;
        let ch = [2, 64, 128, 256, 64, 1];
        let conv: usize = (0..5).map(|l| ch[l] * ch[l + 1] * 9 + ch[l + 1]).sum();
        let norm: usize = (1..5).map(|l| 2 * ch[l] + 1).sum();
        assert_eq!(layout.n_values(), 2 * (dual + conv + norm));
        assert_eq!(layout.n_stats(), 2 * 2 * (64 + 128 + 256 + 64));
        let mut end = 0;
        for b in layout.blocks() {
            assert_eq!(b.offset, end);
            end += b.len;
        }
        assert_eq!(end, layout.n_values());
    }

    #[test]
    fn shared_weights_use_one_set() {
        let cfg = NetworkConfig {
            shared_weights: true,
            ..NetworkConfig::default()
        };
        let shared = Layout::new(&cfg).unwrap();
        let single = Layout::new(&NetworkConfig::default().with_phases(1)).unwrap();
        assert_eq!(shared.n_values(), single.n_values());
    }

    #[test]
    fn init_respects_bounds() {
        let cfg = NetworkConfig::default()
            .with_phases(1)
            .with_channels(vec![2, 8, 1]);
        let p = NetworkParams::init(&cfg, 3).unwrap();
        assert_eq!(p, NetworkParams::init(&cfg, 3).unwrap());
        assert_ne!(p, NetworkParams::init(&cfg, 4).unwrap());
        for b in p.layout().blocks() {
            let vals = &p.values[b.range()];
            match b.kind {
                BlockKind::Weight | BlockKind::Bias => {
                    let bound = 1.0 / (b.fan_in as f64).sqrt();
                    assert!(vals.iter().all(|v| v.abs() < bound), "{}", b.name);
                }
                BlockKind::PreluSlope => assert_eq!(vals, [PRELU_INIT]),
                BlockKind::BnScale => assert!(vals.iter().all(|&v| v == 1.0)),
                BlockKind::BnShift => assert!(vals.iter().all(|&v| v == 0.0)),
            }
        }
        assert_eq!(
            p.block("phase0.primal.conv1.weight").unwrap().len(),
            8 * 2 * 9
        );
        assert!(p.block("phase1.primal.conv1.weight").is_none());
    }

    #[test]
    fn from_parts_checks_lengths() {
        let cfg = NetworkConfig::default()
            .with_phases(1)
            .with_channels(vec![2, 4, 1]);
        let p = NetworkParams::zeros(&cfg).unwrap();
        assert!(NetworkParams::from_parts(&cfg, p.values.clone(), p.running_stats.clone()).is_ok());
        assert!(NetworkParams::from_parts(&cfg, vec![0.0; 3], p.running_stats.clone()).is_err());
    }
}
