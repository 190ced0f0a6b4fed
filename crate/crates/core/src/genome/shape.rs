use std::fmt;

use super::{validate, ActivationKind, GeneKind, Genome, InnovationId, Role};
use crate::error::{Error, Result};

const CONV_KERNEL: usize = 3;
const CONV_PADDING: usize = 1;
const DECONV_KERNEL: usize = 4;
const DECONV_PADDING: usize = 1;
/// Conv genes stop halving once the next size would fall below this.
const MIN_SPATIAL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Flat(usize),
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn spatial(channels: usize, height: usize, width: usize) -> Self {
        Shape::Spatial {
            channels,
            height,
            width,
        }
    }

    pub fn numel(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        match *self {
            Shape::Flat(_) => None,
            Shape::Spatial {
                channels,
                height,
                width,
            } => Some((channels, height, width)),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Flat(n) => write!(f, "{n}"),
            Shape::Spatial {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerOp {
    Linear,
    Conv {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    TransposeConv {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

/// Where a concrete layer comes from: an evolved gene, or one of the fixed layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerSource {
    Gene(InnovationId),
    /// Generator-only projection from noise to the first spatial shape, used
    /// when the genome has transpose-conv genes but no linear gene before them.
    InputProjection,
    OutputAdapter,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerPlan {
    pub source: LayerSource,
    pub op: LayerOp,
    pub input: Shape,
    pub output: Shape,
    /// `None` is the identity.
    pub activation: Option<ActivationKind>,
    /// Shape produced by the op before cropping down to `output`.
    pub crop_from: Option<Shape>,
}

impl LayerPlan {
    /// Output of the op itself, before any crop.
    pub fn op_output(&self) -> Shape {
        self.crop_from.unwrap_or(self.output)
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        let out = self.op_output();
        match self.op {
            LayerOp::Linear => vec![out.numel(), self.input.numel()],
            LayerOp::Conv { kernel, .. } => {
                let (in_c, _, _) = self.input.dims().expect("conv input is spatial");
                let (out_c, _, _) = out.dims().expect("conv output is spatial");
                vec![out_c, in_c, kernel, kernel]
            }
            LayerOp::TransposeConv { kernel, .. } => {
                let (in_c, _, _) = self.input.dims().expect("deconv input is spatial");
                let (out_c, _, _) = out.dims().expect("deconv output is spatial");
                vec![in_c, out_c, kernel, kernel]
            }
        }
    }

    pub fn bias_len(&self) -> usize {
        match self.op {
            LayerOp::Linear => self.op_output().numel(),
            LayerOp::Conv { .. } | LayerOp::TransposeConv { .. } => {
                self.op_output().dims().map(|(c, _, _)| c).unwrap_or(0)
            }
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.op {
            LayerOp::Linear => self.input.numel(),
            LayerOp::Conv { kernel, .. } | LayerOp::TransposeConv { kernel, .. } => {
                let (in_c, _, _) = self.input.dims().expect("spatial input");
                in_c * kernel * kernel
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShapePlan {
    pub role: Role,
    pub input: Shape,
    /// Execution order: optional input projection, one layer per gene, output adapter.
    pub layers: Vec<LayerPlan>,
    pub output: Shape,
}

impl ShapePlan {
    pub fn adapter(&self) -> &LayerPlan {
        self.layers.last().expect("plan always has an adapter")
    }

    pub fn gene_layers(&self) -> impl Iterator<Item = &LayerPlan> {
        self.layers
            .iter()
            .filter(|l| matches!(l.source, LayerSource::Gene(_)))
    }

    /// Checks that every layer consumes exactly what the previous one produced.
    pub fn check_chain(&self) -> Result<()> {
        let mut current = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input != current {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} but receives {current}",
                    layer.input
                )));
            }
            current = layer.output;
        }
        if current != self.output {
            return Err(Error::Shape(format!(
                "plan produces {current}, required {}",
                self.output
            )));
        }
        Ok(())
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Resolves concrete layer dimensions for a genome.
///
/// Discriminators read `data_shape` and end in a single sigmoid unit.
/// Generators read a `noise_dim` vector and end in a tanh layer shaped like
/// `data_shape`.
pub fn infer_shapes(genome: &Genome, data_shape: Shape, noise_dim: usize) -> Result<ShapePlan> {
    validate(genome).map_err(Error::InvalidGenome)?;
    let Some((data_c, data_h, data_w)) = data_shape.dims() else {
        return Err(Error::Shape(format!(
            "data shape must be channels x height x width, got {data_shape}"
        )));
    };
    if data_c == 0 || data_h == 0 || data_w == 0 {
        return Err(Error::Shape(format!("empty data shape {data_shape}")));
    }
    match genome.role {
        Role::Discriminator => Ok(discriminator_plan(genome, data_shape)),
        Role::Generator => {
            if noise_dim == 0 {
                return Err(Error::Shape("noise dimension must be positive".into()));
            }
            Ok(generator_plan(genome, data_shape, noise_dim))
        }
    }
}

fn discriminator_plan(genome: &Genome, data_shape: Shape) -> ShapePlan {
    let mut layers = Vec::with_capacity(genome.genes.len() + 1);
    let mut current = data_shape;
    for gene in &genome.genes {
        let (op, output) = match gene.kind {
            GeneKind::Conv { out_channels } => {
                let (_, h, w) = current.dims().expect("conv section precedes linear section");
                let halved = (ceil_div(h, 2), ceil_div(w, 2));
                let (stride, oh, ow) = if halved.0 >= MIN_SPATIAL && halved.1 >= MIN_SPATIAL {
                    (2, halved.0, halved.1)
                } else {
                    (1, h, w)
                };
                (
                    LayerOp::Conv {
                        kernel: CONV_KERNEL,
                        stride,
                        padding: CONV_PADDING,
                    },
                    Shape::spatial(out_channels as usize, oh, ow),
                )
            }
            GeneKind::Linear { out_features } => {
                (LayerOp::Linear, Shape::Flat(out_features as usize))
            }
            GeneKind::TransposeConv { .. } => unreachable!("validated"),
        };
        layers.push(LayerPlan {
            source: LayerSource::Gene(gene.innovation_id),
            op,
            input: current,
            output,
            activation: Some(gene.activation),
            crop_from: None,
        });
        current = output;
    }
    layers.push(LayerPlan {
        source: LayerSource::OutputAdapter,
        op: LayerOp::Linear,
        input: current,
        output: Shape::Flat(1),
        activation: Some(ActivationKind::Sigmoid),
        crop_from: None,
    });
    ShapePlan {
        role: Role::Discriminator,
        input: data_shape,
        layers,
        output: Shape::Flat(1),
    }
}

fn generator_plan(genome: &Genome, data_shape: Shape, noise_dim: usize) -> ShapePlan {
    let (data_c, data_h, data_w) = data_shape.dims().expect("checked by caller");
    let deconvs = genome.count_spatial();
    let linears = genome.leading_section_len();
    let scale = 1usize.checked_shl(deconvs as u32).unwrap_or(usize::MAX);
    let (h0, w0) = (ceil_div(data_h, scale), ceil_div(data_w, scale));
    let reshape = |features: usize| Shape::spatial(ceil_div(features, h0 * w0).max(1), h0, w0);

    let mut layers = Vec::with_capacity(genome.genes.len() + 2);
    let input = Shape::Flat(noise_dim);
    let mut current = input;
    if deconvs > 0 && linears == 0 {
        let output = reshape(noise_dim);
        layers.push(LayerPlan {
            source: LayerSource::InputProjection,
            op: LayerOp::Linear,
            input: current,
            output,
            activation: None,
            crop_from: None,
        });
        current = output;
    }
    for (i, gene) in genome.genes.iter().enumerate() {
        let (op, output) = match gene.kind {
            GeneKind::Linear { out_features } => {
                let features = out_features as usize;
                let output = if deconvs > 0 && i + 1 == linears {
                    reshape(features)
                } else {
                    Shape::Flat(features)
                };
                (LayerOp::Linear, output)
            }
            GeneKind::TransposeConv { out_channels } => {
                let (_, h, w) = current.dims().expect("linear section precedes deconv section");
                (
                    LayerOp::TransposeConv {
                        kernel: DECONV_KERNEL,
                        stride: 2,
                        padding: DECONV_PADDING,
                    },
                    Shape::spatial(out_channels as usize, 2 * h, 2 * w),
                )
            }
            GeneKind::Conv { .. } => unreachable!("validated"),
        };
        layers.push(LayerPlan {
            source: LayerSource::Gene(gene.innovation_id),
            op,
            input: current,
            output,
            activation: Some(gene.activation),
            crop_from: None,
        });
        current = output;
    }
    let adapter = match current {
        Shape::Flat(_) => LayerPlan {
            source: LayerSource::OutputAdapter,
            op: LayerOp::Linear,
            input: current,
            output: data_shape,
            activation: Some(ActivationKind::Tanh),
            crop_from: None,
        },
        Shape::Spatial { height, width, .. } => {
            let full = Shape::spatial(data_c, height, width);
            LayerPlan {
                source: LayerSource::OutputAdapter,
                op: LayerOp::Conv {
                    kernel: CONV_KERNEL,
                    stride: 1,
                    padding: CONV_PADDING,
                },
                input: current,
                output: data_shape,
                activation: Some(ActivationKind::Tanh),
                crop_from: (full != data_shape).then_some(full),
            }
        }
    };
    layers.push(adapter);
    ShapePlan {
        role: Role::Generator,
        input,
        layers,
        output: data_shape,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::Gene;

    fn genome(role: Role, kinds: &[GeneKind]) -> Genome {
        Genome {
            role,
            genes: kinds
                .iter()
                .enumerate()
                .map(|(i, &kind)| Gene {
                    innovation_id: i as u64 + 1,
                    kind,
                    activation: ActivationKind::ReLU,
                })
                .collect(),
            max_len: 6,
        }
    }

    const MNIST: Shape = Shape::Spatial {
        channels: 1,
        height: 28,
        width: 28,
    };

    #[test]
    fn discriminator_convs_halve() {
        let g = genome(
            Role::Discriminator,
            &[
                GeneKind::Conv { out_channels: 16 },
                GeneKind::Conv { out_channels: 32 },
                GeneKind::Linear { out_features: 64 },
            ],
        );
        let plan = infer_shapes(&g, MNIST, 100).unwrap();
        plan.check_chain().unwrap();
        assert_eq!(plan.layers[0].output, Shape::spatial(16, 14, 14));
        assert_eq!(plan.layers[1].output, Shape::spatial(32, 7, 7));
        assert_eq!(plan.layers[2].input, Shape::spatial(32, 7, 7));
        assert_eq!(plan.layers[2].weight_dims(), vec![64, 32 * 49]);
        assert_eq!(plan.output, Shape::Flat(1));
    }

    #[test]
    fn discriminator_conv_floor() {
        let g = genome(
            Role::Discriminator,
            &[GeneKind::Conv { out_channels: 16 }; 5],
        );
        let plan = infer_shapes(&g, MNIST, 100).unwrap();
        let sizes: Vec<_> = plan
            .gene_layers()
            .map(|l| l.output.dims().unwrap().1)
            .collect();
        assert_eq!(sizes, vec![14, 7, 4, 4, 4]);
        assert!(matches!(plan.layers[3].op, LayerOp::Conv { stride: 1, .. }));
    }

    #[test]
    fn discriminator_linear_only_flattens() {
        let g = genome(Role::Discriminator, &[GeneKind::Linear { out_features: 50 }]);
        let plan = infer_shapes(&g, MNIST, 100).unwrap();
        assert_eq!(plan.layers[0].fan_in(), 784);
        assert_eq!(plan.adapter().input, Shape::Flat(50));
    }

    #[test]
    fn generator_single_deconv_doubles() {
        let g = genome(
            Role::Generator,
            &[
                GeneKind::Linear { out_features: 400 },
                GeneKind::TransposeConv { out_channels: 32 },
            ],
        );
        let plan = infer_shapes(&g, MNIST, 100).unwrap();
        plan.check_chain().unwrap();
        assert_eq!(plan.layers[0].output, Shape::spatial(3, 14, 14));
        assert_eq!(plan.layers[1].output, Shape::spatial(32, 28, 28));
        assert_eq!(plan.adapter().crop_from, None);
        assert_eq!(plan.output, MNIST);
    }

    #[test]
    fn generator_crops_overshoot() {
        let g = genome(
            Role::Generator,
            &[GeneKind::TransposeConv { out_channels: 16 }; 3],
        );
        let plan = infer_shapes(&g, MNIST, 100).unwrap();
        plan.check_chain().unwrap();
        assert_eq!(plan.layers[0].source, LayerSource::InputProjection);
        assert_eq!(plan.layers[0].output, Shape::spatial(7, 4, 4));
        assert_eq!(plan.adapter().crop_from, Some(Shape::spatial(1, 32, 32)));
    }

    #[test]
    fn generator_linear_only_projects_to_sample() {
        let g = genome(Role::Generator, &[GeneKind::Linear { out_features: 64 }]);
        let ring = Shape::spatial(1, 1, 2);
        let plan = infer_shapes(&g, ring, 100).unwrap();
        plan.check_chain().unwrap();
        assert_eq!(plan.adapter().weight_dims(), vec![2, 64]);
    }

    #[test]
    fn invalid_genome_rejected() {
        let g = genome(
            Role::Generator,
            &[GeneKind::Conv { out_channels: 16 }],
        );
        assert!(matches!(
            infer_shapes(&g, MNIST, 100),
            Err(Error::InvalidGenome(_))
        ));
    }
}
