//! Training-memory accounting for sequential conv-net descriptions.
//!
//! Backpropagation must keep the output activation of every layer alive,
//! so the stored-activation footprint scales with the input resolution
//! while the parameter footprint does not. The estimator counts exactly
//! one output buffer per layer plus the layer's parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BYTES_FP32: u64 = 4;
pub const BYTES_FP16: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    SeparableConv,
    Pool,
    FullyConnected,
    ResidualAdd,
}

/// One layer of a sequential network description.
///
/// For `fully_connected`, `in_channels` is the flattened input size and
/// must equal `channels * height * width` at that point of the chain.
/// `pool` and `residual_add` carry no parameters; `residual_add` leaves
/// the shape unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: u32,
    pub out_channels: u32,
    #[serde(default = "one")]
    pub kernel: u32,
    #[serde(default = "one")]
    pub stride: u32,
    #[serde(default)]
    pub padding: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub kind: LayerKind,
    pub output_shape: (u32, u32, u32), // (channels, height, width)
    pub parameter_count: u64,
    pub parameter_bytes: u64,
    pub activation_elements: u64,
    pub activation_bytes: u64,
    pub cumulative_parameter_bytes: u64,
    pub cumulative_activation_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub input_shape: (u32, u32, u32),
    pub batch: u32,
    pub bytes_per_element: u64,
    pub layers: Vec<LayerReport>,
    pub total_parameter_count: u64,
    pub total_parameter_bytes: u64,
    pub total_activation_elements: u64,
    pub total_activation_bytes: u64,
}

fn spatial_out(len: u32, kernel: u32, stride: u32, padding: u32, index: usize) -> Result<u32> {
    let padded = u64::from(len) + 2 * u64::from(padding);
    if padded < u64::from(kernel) {
        return Err(Error::Layer {
            index,
            message: format!("kernel {kernel} exceeds padded input extent {padded}"),
        });
    }
    Ok((((padded - u64::from(kernel)) / u64::from(stride)) + 1) as u32)
}

/// Walk the layer chain and account parameters and stored activations.
/// `input` is (height, width, channels).
pub fn estimate(
    layers: &[LayerSpec],
    input: (u32, u32, u32),
    batch: u32,
    bytes_per_element: u64,
) -> Result<MemoryReport> {
    let (mut height, mut width, mut channels) = input;
    if height == 0 || width == 0 || channels == 0 || batch == 0 || bytes_per_element == 0 {
        return Err(Error::Argument(
            "input dimensions, batch and bytes-per-element must be positive".into(),
        ));
    }

    let mut reports = Vec::with_capacity(layers.len());
    let mut cum_params = 0u64;
    let mut cum_act = 0u64;
    for (index, layer) in layers.iter().enumerate() {
        if layer.stride == 0 || layer.kernel == 0 || layer.in_channels == 0 || layer.out_channels == 0
        {
            return Err(Error::Layer {
                index,
                message: "layer dimensions must be positive".into(),
            });
        }
        let c_in = u64::from(layer.in_channels);
        let c_out = u64::from(layer.out_channels);
        let k2 = u64::from(layer.kernel) * u64::from(layer.kernel);
        let params = match layer.kind {
            LayerKind::Conv => {
                expect_channels(layer.in_channels, channels, index)?;
                k2 * c_in * c_out + c_out
            }
            LayerKind::SeparableConv => {
                expect_channels(layer.in_channels, channels, index)?;
                k2 * c_in + c_in * c_out + c_out
            }
            LayerKind::FullyConnected => {
                let flat = u64::from(channels) * u64::from(height) * u64::from(width);
                if c_in != flat {
                    return Err(Error::Layer {
                        index,
                        message: format!(
                            "fully-connected input size {c_in} does not match flattened shape {flat}"
                        ),
                    });
                }
                c_in * c_out + c_out
            }
            LayerKind::Pool | LayerKind::ResidualAdd => {
                expect_channels(layer.in_channels, channels, index)?;
                if layer.out_channels != layer.in_channels {
                    return Err(Error::Layer {
                        index,
                        message: "pool and residual layers cannot change the channel count".into(),
                    });
                }
                0
            }
        };

        match layer.kind {
            LayerKind::Conv | LayerKind::SeparableConv | LayerKind::Pool => {
                height = spatial_out(height, layer.kernel, layer.stride, layer.padding, index)?;
                width = spatial_out(width, layer.kernel, layer.stride, layer.padding, index)?;
                channels = layer.out_channels;
            }
            LayerKind::FullyConnected => {
                channels = layer.out_channels;
                height = 1;
                width = 1;
            }
            LayerKind::ResidualAdd => {}
        }

        let activation_elements =
            u64::from(batch) * u64::from(channels) * u64::from(height) * u64::from(width);
        cum_params += params * bytes_per_element;
        cum_act += activation_elements * bytes_per_element;
        reports.push(LayerReport {
            index,
            kind: layer.kind,
            output_shape: (channels, height, width),
            parameter_count: params,
            parameter_bytes: params * bytes_per_element,
            activation_elements,
            activation_bytes: activation_elements * bytes_per_element,
            cumulative_parameter_bytes: cum_params,
            cumulative_activation_bytes: cum_act,
        });
    }

    Ok(MemoryReport {
        input_shape: input,
        batch,
        bytes_per_element,
        total_parameter_count: reports.iter().map(|r| r.parameter_count).sum(),
        total_parameter_bytes: cum_params,
        total_activation_elements: reports.iter().map(|r| r.activation_elements).sum(),
        total_activation_bytes: cum_act,
        layers: reports,
    })
}

fn expect_channels(declared: u32, actual: u32, index: usize) -> Result<()> {
    if declared != actual {
        return Err(Error::Layer {
            index,
            message: format!("layer expects {declared} input channels but receives {actual}"),
        });
    }
    Ok(())
}

/// Load a network description: a JSON list of layers.
pub fn load_network(path: impl AsRef<Path>) -> Result<Vec<LayerSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: 0,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(c_in: u32, c_out: u32, kernel: u32, stride: u32, padding: u32) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv,
            in_channels: c_in,
            out_channels: c_out,
            kernel,
            stride,
            padding,
        }
    }

    #[test]
    fn single_conv_example() {
        let report = estimate(&[conv(3, 64, 3, 1, 1)], (224, 224, 3), 2, BYTES_FP32).unwrap();
        assert_eq!(report.total_parameter_count, 1792);
        assert_eq!(report.total_activation_elements, 2 * 64 * 224 * 224);
        assert_eq!(report.total_activation_elements, 6_422_528);
        assert_eq!(report.total_activation_bytes, 6_422_528 * 4);
    }

    #[test]
    fn parameters_invariant_under_resolution_activations_scale() {
        let layers = [conv(3, 64, 3, 1, 1)];
        let small = estimate(&layers, (224, 224, 3), 1, BYTES_FP32).unwrap();
        let large = estimate(&layers, (448, 448, 3), 1, BYTES_FP32).unwrap();
        assert_eq!(small.total_parameter_bytes, large.total_parameter_bytes);
        assert_eq!(large.total_activation_elements, 4 * small.total_activation_elements);
    }

    #[test]
    fn separable_conv_parameter_formula() {
        let layer = LayerSpec {
            kind: LayerKind::SeparableConv,
            in_channels: 32,
            out_channels: 64,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let report = estimate(&[layer], (64, 64, 32), 1, BYTES_FP32).unwrap();
        assert_eq!(report.total_parameter_count, 9 * 32 + 32 * 64 + 64);
    }

    #[test]
    fn fully_connected_and_pool() {
        let layers = [
            LayerSpec {
                kind: LayerKind::Pool,
                in_channels: 8,
                out_channels: 8,
                kernel: 2,
                stride: 2,
                padding: 0,
            },
            LayerSpec {
                kind: LayerKind::FullyConnected,
                in_channels: 8 * 4 * 4,
                out_channels: 10,
                kernel: 1,
                stride: 1,
                padding: 0,
            },
        ];
        let report = estimate(&layers, (8, 8, 8), 1, BYTES_FP32).unwrap();
        assert_eq!(report.layers[0].parameter_count, 0);
        assert_eq!(report.layers[0].output_shape, (8, 4, 4));
        assert_eq!(report.layers[1].parameter_count, 128 * 10 + 10);
        assert_eq!(report.layers[1].output_shape, (10, 1, 1));
    }

    #[test]
    fn residual_add_keeps_shape_and_adds_buffer() {
        let layers = [LayerSpec {
            kind: LayerKind::ResidualAdd,
            in_channels: 16,
            out_channels: 16,
            kernel: 1,
            stride: 1,
            padding: 0,
        }];
        let report = estimate(&layers, (10, 10, 16), 3, BYTES_FP32).unwrap();
        assert_eq!(report.total_parameter_count, 0);
        assert_eq!(report.total_activation_elements, 3 * 16 * 10 * 10);
    }

    #[test]
    fn half_precision_halves_every_byte_figure() {
        let layers = [conv(3, 64, 3, 1, 1), conv(64, 64, 3, 2, 1)];
        let full = estimate(&layers, (128, 128, 3), 2, BYTES_FP32).unwrap();
        let half = estimate(&layers, (128, 128, 3), 2, BYTES_FP16).unwrap();
        assert_eq!(full.total_parameter_bytes, 2 * half.total_parameter_bytes);
        assert_eq!(full.total_activation_bytes, 2 * half.total_activation_bytes);
        for (f, h) in full.layers.iter().zip(&half.layers) {
            assert_eq!(f.parameter_bytes, 2 * h.parameter_bytes);
            assert_eq!(f.activation_bytes, 2 * h.activation_bytes);
        }
    }

    #[test]
    fn activation_scales_linearly_in_batch() {
        let layers = [conv(3, 16, 3, 1, 1)];
        let b1 = estimate(&layers, (64, 64, 3), 1, BYTES_FP32).unwrap();
        let b4 = estimate(&layers, (64, 64, 3), 4, BYTES_FP32).unwrap();
        assert_eq!(b4.total_activation_bytes, 4 * b1.total_activation_bytes);
        assert_eq!(b4.total_parameter_bytes, b1.total_parameter_bytes);
    }

    #[test]
    fn dimensional_mismatch_names_layer() {
        let layers = [conv(3, 16, 3, 1, 1), conv(32, 16, 3, 1, 1)];
        match estimate(&layers, (64, 64, 3), 1, BYTES_FP32) {
            Err(Error::Layer { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected layer error, got {other:?}"),
        }
    }

    #[test]
    fn kernel_larger_than_input_rejected() {
        let layers = [conv(3, 16, 9, 1, 0)];
        assert!(matches!(
            estimate(&layers, (4, 4, 3), 1, BYTES_FP32),
            Err(Error::Layer { index: 0, .. })
        ));
    }
}
