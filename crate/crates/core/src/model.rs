//! The full parameter set and its flat named-tensor registry.
//!
//! Every learnable tensor has a stable name; [`param_specs`] lists them in
//! the canonical order used both for weight-file manifests and for seeded
//! initialization:
//!
//! 1. `backbone.pre.*`, then `backbone.stage{1..4}.down.*` and
//!    `backbone.stage{s}.unit{u}.{conv1,affine1,conv2,affine2}.*`,
//! 2. `decoder.level{4,3,2}.{prune.mlp1,prune.mlp2,proposal,up}.*`
//!    (decoder execution order), then `decoder.level1.proposal.*`,
//! 3. `head.{conv,affine,cls,reg}.*`.
//!
//! Initialization draws convolution and MLP weights uniformly from
//! `[-b, b]` with `b = sqrt(6 / fan_in)`, `fan_in = kernel³ · in_channels`,
//! walking the registry in order with a seeded ChaCha stream; biases start
//! at zero and affine layers at identity. A given `(config, seed)` pair
//! therefore reproduces the exact same bytes anywhere.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};

use crate::backbone::{BackboneParams, ResidualUnitParams, StageParams};
use crate::config::PipelineConfig;
use crate::decoder::{DecoderParams, DspBlockParams, HeadParams, PruneHeadParams};
use crate::error::{EngineError, Result};
use crate::math;
use crate::sconv::{AffineParams, ConvParams};

/// Everything the pipeline learns.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub decoder: DecoderParams,
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Drawn uniformly from `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`.
    Weight { fan_in: usize },
    /// Starts at zero.
    Bias,
    /// Starts at one.
    AffineScale,
    /// Starts at zero.
    AffineBias,
}

/// Name, shape and init class of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn conv_spec(name: &str, kernel: usize, cin: usize, cout: usize) -> ParamSpec {
    ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![kernel * kernel * kernel, cin, cout],
        kind: ParamKind::Weight {
            fan_in: kernel * kernel * kernel * cin,
        },
    }
}

fn affine_specs(name: &str, ch: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{name}.scale"),
            shape: vec![ch],
            kind: ParamKind::AffineScale,
        },
        ParamSpec {
            name: format!("{name}.bias"),
            shape: vec![ch],
            kind: ParamKind::AffineBias,
        },
    ]
}

fn bias_spec(name: &str, n: usize) -> ParamSpec {
    ParamSpec {
        name: String::from(name),
        shape: vec![n],
        kind: ParamKind::Bias,
    }
}

/// The registry: every parameter of the model for `cfg`, in canonical
/// order, each name exactly once.
pub fn param_specs(cfg: &PipelineConfig) -> Vec<ParamSpec> {
    let stem = cfg.stem_channels;
    let feat = cfg.feat_channels;
    let hidden = cfg.prune_hidden();
    let mut specs = Vec::new();

    specs.push(conv_spec("backbone.pre.conv", 1, 1, stem));
    specs.extend(affine_specs("backbone.pre.affine", stem));
    let mut cin = stem;
    for (s, &units) in cfg.residual_units.iter().enumerate() {
        let stage = s + 1;
        specs.push(conv_spec(&format!("backbone.stage{stage}.down.conv"), 1, cin, feat));
        specs.extend(affine_specs(&format!("backbone.stage{stage}.down.affine"), feat));
        for u in 1..=units {
            let base = format!("backbone.stage{stage}.unit{u}");
            specs.push(conv_spec(&format!("{base}.conv1"), 3, feat, feat));
            specs.extend(affine_specs(&format!("{base}.affine1"), feat));
            specs.push(conv_spec(&format!("{base}.conv2"), 3, feat, feat));
            specs.extend(affine_specs(&format!("{base}.affine2"), feat));
        }
        cin = feat;
    }

    for level in [4, 3, 2] {
        let base = format!("decoder.level{level}");
        specs.push(ParamSpec {
            name: format!("{base}.prune.mlp1.weight"),
            shape: vec![feat, hidden],
            kind: ParamKind::Weight { fan_in: feat },
        });
        specs.push(bias_spec(&format!("{base}.prune.mlp1.bias"), hidden));
        specs.push(ParamSpec {
            name: format!("{base}.prune.mlp2.weight"),
            shape: vec![hidden, 1],
            kind: ParamKind::Weight { fan_in: hidden },
        });
        specs.push(bias_spec(&format!("{base}.prune.mlp2.bias"), 1));
        specs.push(conv_spec(&format!("{base}.proposal.conv"), 3, feat, feat));
        specs.extend(affine_specs(&format!("{base}.proposal.affine"), feat));
        specs.push(conv_spec(&format!("{base}.up.conv"), 3, feat, feat));
        specs.extend(affine_specs(&format!("{base}.up.affine"), feat));
    }
    specs.push(conv_spec("decoder.level1.proposal.conv", 3, feat, feat));
    specs.extend(affine_specs("decoder.level1.proposal.affine", feat));

    specs.push(conv_spec("head.conv", 3, feat, feat));
    specs.extend(affine_specs("head.affine", feat));
    specs.push(conv_spec("head.cls", 1, feat, cfg.num_classes));
    specs.push(bias_spec("head.cls.bias", cfg.num_classes));
    specs.push(conv_spec("head.reg", 1, feat, 6));
    specs.push(bias_spec("head.reg.bias", 6));
    specs
}

/// Seeded initial values for every parameter, keyed by name.
pub fn init_named(cfg: &PipelineConfig, seed: u64) -> BTreeMap<String, Vec<f32>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for spec in param_specs(cfg) {
        let values = match spec.kind {
            ParamKind::Weight { fan_in } => {
                let bound = math::sqrt(6.0 / fan_in as f64);
                (0..spec.len())
                    .map(|_| {
                        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                        ((2.0 * u - 1.0) * bound) as f32
                    })
                    .collect()
            }
            ParamKind::Bias | ParamKind::AffineBias => vec![0.0; spec.len()],
            ParamKind::AffineScale => vec![1.0; spec.len()],
        };
        out.insert(spec.name, values);
    }
    out
}

/// Seeded model: [`init_named`] assembled into typed parameters.
pub fn init_params(cfg: &PipelineConfig, seed: u64) -> ModelParams {
    ModelParams::from_named(cfg, init_named(cfg, seed))
        .expect("seeded initialization always matches its own registry")
}

struct NamedValues {
    values: BTreeMap<String, Vec<f32>>,
    missing: Vec<String>,
}

impl NamedValues {
    fn take(&mut self, name: &str, expected: usize) -> Result<Vec<f32>> {
        match self.values.remove(name) {
            Some(v) if v.len() == expected => Ok(v),
            Some(v) => Err(EngineError::ParamShape {
                name: String::from(name),
                expected,
                got: v.len(),
            }),
            None => {
                self.missing.push(String::from(name));
                Ok(vec![0.0; expected]) // placeholder; missing reported at the end
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: &str,
        kernel: usize,
        stride: usize,
        transposed: bool,
        cin: usize,
        cout: usize,
        bias: bool,
    ) -> Result<ConvParams> {
        let w = self.take(&format!("{name}.weight"), kernel.pow(3) * cin * cout)?;
        let b = if bias {
            Some(self.take(&format!("{name}.bias"), cout)?)
        } else {
            None
        };
        ConvParams::new(cin, cout, kernel, stride, transposed, w, b)
    }

    fn affine(&mut self, name: &str, ch: usize) -> Result<AffineParams> {
        let scale = self.take(&format!("{name}.scale"), ch)?;
        let bias = self.take(&format!("{name}.bias"), ch)?;
        if self.missing.is_empty() {
            AffineParams::new(scale, bias)
        } else {
            // Placeholder zeros would fail the nonzero-scale check; the
            // missing-parameter error wins below.
            Ok(AffineParams::identity(ch))
        }
    }
}

impl ModelParams {
    /// Assemble typed parameters from a flat name → values map. Every
    /// registry entry must be present with its exact length; unknown names
    /// are rejected.
    pub fn from_named(
        cfg: &PipelineConfig,
        values: BTreeMap<String, Vec<f32>>,
    ) -> Result<Self> {
        let stem = cfg.stem_channels;
        let feat = cfg.feat_channels;
        let hidden = cfg.prune_hidden();
        let mut nv = NamedValues {
            values,
            missing: Vec::new(),
        };

        let pre = nv.conv("backbone.pre.conv", 1, 2, false, 1, stem, false)?;
        let pre_affine = nv.affine("backbone.pre.affine", stem)?;
        let mut stages = Vec::with_capacity(4);
        let mut cin = stem;
        for (s, &units) in cfg.residual_units.iter().enumerate() {
            let stage = s + 1;
            let down = nv.conv(
                &format!("backbone.stage{stage}.down.conv"),
                1,
                2,
                false,
                cin,
                feat,
                false,
            )?;
            let down_affine = nv.affine(&format!("backbone.stage{stage}.down.affine"), feat)?;
            let mut unit_params = Vec::with_capacity(units);
            for u in 1..=units {
                let base = format!("backbone.stage{stage}.unit{u}");
                unit_params.push(ResidualUnitParams {
                    conv1: nv.conv(&format!("{base}.conv1"), 3, 1, false, feat, feat, false)?,
                    affine1: nv.affine(&format!("{base}.affine1"), feat)?,
                    conv2: nv.conv(&format!("{base}.conv2"), 3, 1, false, feat, feat, false)?,
                    affine2: nv.affine(&format!("{base}.affine2"), feat)?,
                });
            }
            stages.push(StageParams {
                down,
                down_affine,
                units: unit_params,
            });
            cin = feat;
        }

        let mut blocks: Vec<DspBlockParams> = Vec::with_capacity(4);
        for level in [4, 3, 2] {
            let base = format!("decoder.level{level}");
            let w1 = nv.take(&format!("{base}.prune.mlp1.weight"), feat * hidden)?;
            let b1 = nv.take(&format!("{base}.prune.mlp1.bias"), hidden)?;
            let w2 = nv.take(&format!("{base}.prune.mlp2.weight"), hidden)?;
            let b2 = nv.take(&format!("{base}.prune.mlp2.bias"), 1)?;
            let prune = PruneHeadParams::new(feat, hidden, w1, b1, w2, b2)?;
            let proposal = nv.conv(&format!("{base}.proposal.conv"), 3, 1, false, feat, feat, false)?;
            let proposal_affine = nv.affine(&format!("{base}.proposal.affine"), feat)?;
            let up = nv.conv(&format!("{base}.up.conv"), 3, 2, true, feat, feat, false)?;
            let up_affine = nv.affine(&format!("{base}.up.affine"), feat)?;
            blocks.push(DspBlockParams {
                proposal,
                proposal_affine,
                prune: Some(prune),
                up: Some((up, up_affine)),
            });
        }
        blocks.push(DspBlockParams {
            proposal: nv.conv("decoder.level1.proposal.conv", 3, 1, false, feat, feat, false)?,
            proposal_affine: nv.affine("decoder.level1.proposal.affine", feat)?,
            prune: None,
            up: None,
        });
        blocks.reverse(); // stored ascending: blocks[i] serves level i + 1

        let head = HeadParams {
            conv: nv.conv("head.conv", 3, 1, false, feat, feat, false)?,
            affine: nv.affine("head.affine", feat)?,
            cls: nv.conv("head.cls", 1, 1, false, feat, cfg.num_classes, true)?,
            reg: nv.conv("head.reg", 1, 1, false, feat, 6, true)?,
        };

        if !nv.missing.is_empty() {
            return Err(EngineError::MissingParams(nv.missing.join(", ")));
        }
        if !nv.values.is_empty() {
            let names: Vec<String> = nv.values.keys().cloned().collect();
            return Err(EngineError::UnknownParams(names.join(", ")));
        }

        Ok(Self {
            backbone: BackboneParams {
                pre,
                pre_affine,
                stages: stages.try_into().expect("four stages"),
            },
            decoder: DecoderParams {
                blocks: blocks.try_into().expect("four blocks"),
                head,
            },
        })
    }

    /// Flatten back into `(name, shape, values)` triples in registry order.
    pub fn to_named(&self, cfg: &PipelineConfig) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        let push_conv = |out: &mut Vec<_>, name: &str, p: &ConvParams| {
            out.push((
                format!("{name}.weight"),
                vec![p.kernel_size.pow(3), p.in_channels, p.out_channels],
                p.weights.clone(),
            ));
        };
        let push_affine = |out: &mut Vec<(String, Vec<usize>, Vec<f32>)>, name: &str, a: &AffineParams| {
            out.push((format!("{name}.scale"), vec![a.scale.len()], a.scale.clone()));
            out.push((format!("{name}.bias"), vec![a.bias.len()], a.bias.clone()));
        };

        push_conv(&mut out, "backbone.pre.conv", &self.backbone.pre);
        push_affine(&mut out, "backbone.pre.affine", &self.backbone.pre_affine);
        for (s, stage) in self.backbone.stages.iter().enumerate() {
            let sn = s + 1;
            push_conv(&mut out, &format!("backbone.stage{sn}.down.conv"), &stage.down);
            push_affine(&mut out, &format!("backbone.stage{sn}.down.affine"), &stage.down_affine);
            for (u, unit) in stage.units.iter().enumerate() {
                let base = format!("backbone.stage{sn}.unit{}", u + 1);
                push_conv(&mut out, &format!("{base}.conv1"), &unit.conv1);
                push_affine(&mut out, &format!("{base}.affine1"), &unit.affine1);
                push_conv(&mut out, &format!("{base}.conv2"), &unit.conv2);
                push_affine(&mut out, &format!("{base}.affine2"), &unit.affine2);
            }
        }
        for level in [4usize, 3, 2] {
            let block = &self.decoder.blocks[level - 1];
            let base = format!("decoder.level{level}");
            let prune = block.prune.as_ref().expect("levels 2..4 carry prune heads");
            out.push((
                format!("{base}.prune.mlp1.weight"),
                vec![prune.in_channels, prune.hidden],
                prune.w1.clone(),
            ));
            out.push((format!("{base}.prune.mlp1.bias"), vec![prune.hidden], prune.b1.clone()));
            out.push((
                format!("{base}.prune.mlp2.weight"),
                vec![prune.hidden, 1],
                prune.w2.clone(),
            ));
            out.push((format!("{base}.prune.mlp2.bias"), vec![1], prune.b2.clone()));
            push_conv(&mut out, &format!("{base}.proposal.conv"), &block.proposal);
            push_affine(&mut out, &format!("{base}.proposal.affine"), &block.proposal_affine);
            let (up, up_affine) = block.up.as_ref().expect("levels 2..4 upsample");
            push_conv(&mut out, &format!("{base}.up.conv"), up);
            push_affine(&mut out, &format!("{base}.up.affine"), up_affine);
        }
        push_conv(&mut out, "decoder.level1.proposal.conv", &self.decoder.blocks[0].proposal);
        push_affine(
            &mut out,
            "decoder.level1.proposal.affine",
            &self.decoder.blocks[0].proposal_affine,
        );

        push_conv(&mut out, "head.conv", &self.decoder.head.conv);
        push_affine(&mut out, "head.affine", &self.decoder.head.affine);
        push_conv(&mut out, "head.cls", &self.decoder.head.cls);
        out.push((
            String::from("head.cls.bias"),
            vec![cfg.num_classes],
            self.decoder.head.cls.bias.clone().expect("cls bias"),
        ));
        push_conv(&mut out, "head.reg", &self.decoder.head.reg);
        out.push((
            String::from("head.reg.bias"),
            vec![6],
            self.decoder.head.reg.bias.clone().expect("reg bias"),
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_and_flattening_agree() {
        let cfg = PipelineConfig::desk();
        let specs = param_specs(&cfg);
        let model = init_params(&cfg, 5);
        let named = model.to_named(&cfg);
        assert_eq!(specs.len(), named.len());
        for (spec, (name, shape, values)) in specs.iter().zip(&named) {
            assert_eq!(&spec.name, name);
            assert_eq!(&spec.shape, shape);
            assert_eq!(spec.len(), values.len());
        }
    }

    #[test]
    fn seeded_init_is_reproducible_and_seed_sensitive() {
        let cfg = PipelineConfig::desk();
        assert_eq!(init_named(&cfg, 9), init_named(&cfg, 9));
        assert_ne!(init_named(&cfg, 9), init_named(&cfg, 10));
    }

    #[test]
    fn weights_respect_fan_in_bound() {
        let cfg = PipelineConfig::desk();
        let named = init_named(&cfg, 3);
        for spec in param_specs(&cfg) {
            if let ParamKind::Weight { fan_in } = spec.kind {
                let bound = (6.0 / fan_in as f64).sqrt() as f32 + f32::EPSILON;
                let values = &named[&spec.name];
                assert!(
                    values.iter().all(|v| v.abs() <= bound),
                    "{} exceeds bound",
                    spec.name
                );
            }
        }
    }

    #[test]
    fn from_named_round_trips() {
        let cfg = PipelineConfig::desk();
        let model = init_params(&cfg, 17);
        let named: BTreeMap<String, Vec<f32>> = model
            .to_named(&cfg)
            .into_iter()
            .map(|(n, _, v)| (n, v))
            .collect();
        let rebuilt = ModelParams::from_named(&cfg, named).unwrap();
        assert_eq!(model, rebuilt);
    }

    #[test]
    fn missing_and_unknown_names_are_rejected() {
        let cfg = PipelineConfig::desk();
        let mut named: BTreeMap<String, Vec<f32>> = init_named(&cfg, 1);
        named.remove("head.conv.weight");
        assert!(matches!(
            ModelParams::from_named(&cfg, named),
            Err(EngineError::MissingParams(m)) if m.contains("head.conv.weight")
        ));

        let mut named = init_named(&cfg, 1);
        named.insert(String::from("head.extra"), vec![1.0]);
        assert!(matches!(
            ModelParams::from_named(&cfg, named),
            Err(EngineError::UnknownParams(u)) if u.contains("head.extra")
        ));
    }
}
