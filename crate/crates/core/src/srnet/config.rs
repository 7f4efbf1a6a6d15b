use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    ResnetLike,
    VggLike,
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::ResnetLike => "resnet",
            BackboneKind::VggLike => "vgg",
        })
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "resnet" | "resnet-like" | "toy_resnet_like" | "r" => Ok(BackboneKind::ResnetLike),
            "vgg" | "vgg-like" | "toy_vgg_like" | "v" => Ok(BackboneKind::VggLike),
            other => Err(Error::InvalidConfig(format!("unknown backbone `{other}`"))),
        }
    }
}

/// Channel and stride interface of the five pyramid levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneVariant {
    pub kind: BackboneKind,
    pub pyramid_channels: [usize; 5],
    pub pyramid_strides: [usize; 5],
}

impl BackboneVariant {
    pub fn resnet_like() -> Self {
        BackboneVariant {
            kind: BackboneKind::ResnetLike,
            pyramid_channels: [64, 256, 512, 1024, 2048],
            pyramid_strides: [2, 4, 8, 16, 32],
        }
    }

    /// The top block uses dilation-8 3x3 convolutions instead of striding.
    pub fn vgg_like() -> Self {
        BackboneVariant {
            kind: BackboneKind::VggLike,
            pyramid_channels: [128, 256, 512, 512, 1024],
            pyramid_strides: [2, 4, 8, 8, 8],
        }
    }

    pub fn of_kind(kind: BackboneKind) -> Self {
        match kind {
            BackboneKind::ResnetLike => Self::resnet_like(),
            BackboneKind::VggLike => Self::vgg_like(),
        }
    }

    pub fn max_stride(&self) -> usize {
        self.pyramid_strides[4]
    }

    /// 1x1 lateral reduction targets.
    pub fn lateral_channels(&self) -> [usize; 5] {
        match self.kind {
            BackboneKind::ResnetLike => [64, 128, 256, 256, 256],
            BackboneKind::VggLike => [128, 128, 256, 256, 256],
        }
    }

    /// Output channels of the 3x3 fusion convs at levels 1..=4.
    pub fn fusion_channels(&self) -> [usize; 4] {
        [FUSED_CHANNELS, 128, 256, 256]
    }

    pub fn top_dilation(&self) -> usize {
        match self.kind {
            BackboneKind::ResnetLike => 1,
            BackboneKind::VggLike => 8,
        }
    }
}

/// Channel count of the fused feature handed to the reasoning module.
pub const FUSED_CHANNELS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationVariant {
    /// Backbone and classifier only.
    Bps,
    /// Adds hierarchical feature fusion.
    Hfs,
    /// Adds the reasoning module with every dilation forced to 1.
    Bfr,
    /// Full network.
    SrNet,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [Self::Bps, Self::Hfs, Self::Bfr, Self::SrNet];
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationVariant::Bps => "BPS",
            AblationVariant::Hfs => "HFS",
            AblationVariant::Bfr => "BFR",
            AblationVariant::SrNet => "SRNet",
        })
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bps" => Ok(Self::Bps),
            "hfs" => Ok(Self::Hfs),
            "bfr" => Ok(Self::Bfr),
            "srnet" => Ok(Self::SrNet),
            other => Err(Error::InvalidConfig(format!("unknown ablation variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SRUnitConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Groups of the 1x1 convolutions.
    pub group_count: usize,
    pub dilation_branch1: usize,
    pub dilation_branch2: usize,
    pub shuffle_groups: usize,
    /// When false, branch 2 is a single 1x1 group conv. Used to reach odd
    /// depth-wise layer counts in depth sweeps.
    pub branch2_depthwise: bool,
}

impl SRUnitConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        SRUnitConfig {
            in_channels,
            out_channels,
            group_count: 4,
            dilation_branch1: 1,
            dilation_branch2: 1,
            shuffle_groups: 4,
            branch2_depthwise: true,
        }
    }

    /// Input is split into halves when channel counts match.
    pub fn splits_input(&self) -> bool {
        self.in_channels == self.out_channels
    }

    pub fn branch_out(&self) -> usize {
        self.out_channels / 2
    }

    pub fn branch_in(&self) -> usize {
        if self.splits_input() {
            self.in_channels / 2
        } else {
            self.in_channels
        }
    }

    pub fn depthwise_layers(&self) -> usize {
        1 + usize::from(self.branch2_depthwise)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("SR-unit channels must be positive".into()));
        }
        if self.group_count == 0 || self.shuffle_groups == 0 {
            return Err(Error::InvalidConfig("SR-unit group counts must be positive".into()));
        }
        if self.dilation_branch1 == 0 || self.dilation_branch2 == 0 {
            return Err(Error::InvalidConfig("SR-unit dilations must be positive".into()));
        }
        if self.out_channels % 2 != 0 {
            return Err(Error::divisibility("SR-unit out_channels", self.out_channels, 2));
        }
        if self.splits_input() && self.in_channels % 2 != 0 {
            return Err(Error::divisibility("SR-unit in_channels", self.in_channels, 2));
        }
        for (what, v) in [
            ("SR-unit in_channels", self.in_channels),
            ("SR-unit out_channels", self.out_channels),
            ("SR-unit branch input", self.branch_in()),
            ("SR-unit branch output", self.branch_out()),
        ] {
            if v % self.group_count != 0 {
                return Err(Error::divisibility(what, v, self.group_count));
            }
        }
        if self.out_channels % self.shuffle_groups != 0 {
            return Err(Error::divisibility("SR-unit shuffle", self.out_channels, self.shuffle_groups));
        }
        if self.in_channels % self.shuffle_groups != 0 {
            return Err(Error::divisibility("SR-unit in_channels", self.in_channels, self.shuffle_groups));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningConfig {
    pub stage_out_channels: Vec<usize>,
    pub units_per_stage: Vec<usize>,
    pub stage_dilations: Vec<usize>,
    pub group_count: usize,
    pub shuffle_groups: usize,
    /// Explicit branch-1 dilation per unit (flattened over stages); replaces
    /// the alternation rule when present.
    pub unit_dilations: Option<Vec<usize>>,
    /// Drop the branch-2 depth-wise conv of the final unit.
    pub single_depthwise_tail: bool,
}

impl ReasoningConfig {
    fn with_units(units: [usize; 3]) -> Self {
        ReasoningConfig {
            stage_out_channels: vec![64, 48, 32],
            units_per_stage: units.to_vec(),
            stage_dilations: vec![2, 2, 1],
            group_count: 4,
            shuffle_groups: 4,
            unit_dilations: None,
            single_depthwise_tail: false,
        }
    }

    /// Four units, (1, 1, 2).
    pub fn resnet_reference() -> Self {
        Self::with_units([1, 1, 2])
    }

    /// Thirteen units, (3, 7, 3).
    pub fn vgg_reference() -> Self {
        Self::with_units([3, 7, 3])
    }

    pub fn for_backbone(kind: BackboneKind) -> Self {
        match kind {
            BackboneKind::ResnetLike => Self::resnet_reference(),
            BackboneKind::VggLike => Self::vgg_reference(),
        }
    }

    /// A stack with exactly `depthwise` depth-wise conv layers.
    ///
    /// Units hold two depth-wise convs each; an odd request ends with a
    /// single-depth-wise unit. Units are spread evenly over the stages with
    /// the remainder going to the last stage first, so four units reproduce
    /// the (1, 1, 2) reference layout.
    pub fn for_depthwise_layers(depthwise: usize, base: &ReasoningConfig) -> Result<Self> {
        if depthwise == 0 {
            return Err(Error::InvalidConfig("depth sweep needs at least one depth-wise layer".into()));
        }
        let stages = base.stage_out_channels.len();
        let units = depthwise.div_ceil(2);
        let mut per_stage = vec![units / stages; stages];
        for i in 0..units % stages {
            per_stage[stages - 1 - i] += 1;
        }
        Ok(ReasoningConfig {
            units_per_stage: per_stage,
            unit_dilations: None,
            single_depthwise_tail: depthwise % 2 == 1,
            ..base.clone()
        })
    }

    pub fn total_units(&self) -> usize {
        self.units_per_stage.iter().sum()
    }

    pub fn with_dilations_forced_to_one(&self) -> Self {
        ReasoningConfig {
            stage_dilations: vec![1; self.stage_dilations.len()],
            unit_dilations: self.unit_dilations.as_ref().map(|d| vec![1; d.len()]),
            ..self.clone()
        }
    }

    /// Expand into one config per unit, in execution order.
    ///
    /// Within a stage, odd-numbered units (1-indexed) use the stage dilation
    /// on branch 1 and even-numbered units use 1. Branch 2 always uses 1.
    pub fn unit_plan(&self, in_channels: usize) -> Result<Vec<SRUnitConfig>> {
        self.validate()?;
        let mut plan = Vec::new();
        let mut channels = in_channels;
        for (s, (&out, &count)) in self.stage_out_channels.iter().zip(&self.units_per_stage).enumerate() {
            for j in 1..=count {
                let mut cfg = SRUnitConfig::new(channels, out);
                cfg.group_count = self.group_count;
                cfg.shuffle_groups = self.shuffle_groups;
                cfg.dilation_branch1 = if j % 2 == 1 { self.stage_dilations[s] } else { 1 };
                plan.push(cfg);
                channels = out;
            }
        }
        if let Some(d) = &self.unit_dilations {
            for (cfg, &dil) in plan.iter_mut().zip(d) {
                cfg.dilation_branch1 = dil;
            }
        }
        if self.single_depthwise_tail {
            if let Some(last) = plan.last_mut() {
                last.branch2_depthwise = false;
            }
        }
        for cfg in &plan {
            cfg.validate()?;
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stage_out_channels.len();
        if n == 0 || self.units_per_stage.len() != n || self.stage_dilations.len() != n {
            return Err(Error::InvalidConfig(
                "reasoning stage channels, units and dilations must have equal non-zero length".into(),
            ));
        }
        if self.stage_out_channels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig("reasoning stage channels must strictly decrease".into()));
        }
        if self.total_units() == 0 {
            return Err(Error::InvalidConfig("reasoning module needs at least one SR-unit".into()));
        }
        if let Some(d) = &self.unit_dilations {
            if d.len() != self.total_units() {
                return Err(Error::InvalidConfig(format!(
                    "{} unit dilations given for {} units",
                    d.len(),
                    self.total_units()
                )));
            }
        }
        Ok(())
    }
}

/// Everything needed to build one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub backbone: BackboneVariant,
    pub ablation: AblationVariant,
    pub reasoning: ReasoningConfig,
    /// Divides backbone, lateral and intermediate fusion widths. The fused
    /// output and the reasoning module keep their full widths.
    pub width_divisor: usize,
    pub input_size: usize,
}

impl NetConfig {
    pub fn reference(kind: BackboneKind, ablation: AblationVariant) -> Self {
        NetConfig {
            backbone: BackboneVariant::of_kind(kind),
            ablation,
            reasoning: ReasoningConfig::for_backbone(kind),
            width_divisor: 1,
            input_size: 320,
        }
    }

    /// Narrow 64x64 network that trains in minutes on one CPU core.
    pub fn desk(kind: BackboneKind, ablation: AblationVariant) -> Self {
        NetConfig {
            width_divisor: 8,
            input_size: 64,
            ..Self::reference(kind, ablation)
        }
    }

    pub fn scaled(&self, c: usize) -> usize {
        (c / self.width_divisor).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_divisor == 0 {
            return Err(Error::InvalidConfig("width divisor must be at least 1".into()));
        }
        if self.input_size == 0 || self.input_size % self.backbone.max_stride() != 0 {
            return Err(Error::divisibility("input size", self.input_size, self.backbone.max_stride()));
        }
        for c in self.backbone.pyramid_channels.iter().chain(&self.backbone.lateral_channels()) {
            if c % self.width_divisor != 0 {
                return Err(Error::divisibility("pyramid width", *c, self.width_divisor));
            }
        }
        if matches!(self.ablation, AblationVariant::Bfr | AblationVariant::SrNet) {
            self.reasoning.unit_plan(FUSED_CHANNELS)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_unit_plans() {
        let r = ReasoningConfig::resnet_reference().unit_plan(128).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(
            r.iter().map(|u| (u.in_channels, u.out_channels, u.dilation_branch1)).collect::<Vec<_>>(),
            vec![(128, 64, 2), (64, 48, 2), (48, 32, 1), (32, 32, 1)]
        );
        let v = ReasoningConfig::vgg_reference().unit_plan(128).unwrap();
        assert_eq!(v.len(), 13);
        assert_eq!(v.iter().map(|u| u.depthwise_layers()).sum::<usize>(), 26);
        // stage 2 alternates 2, 1, 2, 1, ...
        let stage2: Vec<usize> = v[3..10].iter().map(|u| u.dilation_branch1).collect();
        assert_eq!(stage2, vec![2, 1, 2, 1, 2, 1, 2]);
        assert!(v.iter().all(|u| u.dilation_branch2 == 1));
    }

    #[test]
    fn depth_requests_are_exact() {
        let base = ReasoningConfig::resnet_reference();
        for d in [1, 2, 3, 9, 12, 18, 24, 39] {
            let cfg = ReasoningConfig::for_depthwise_layers(d, &base).unwrap();
            let plan = cfg.unit_plan(128).unwrap();
            assert_eq!(plan.iter().map(|u| u.depthwise_layers()).sum::<usize>(), d, "depth {d}");
            assert_eq!(plan.last().unwrap().out_channels, 32);
        }
        let four = ReasoningConfig::for_depthwise_layers(8, &base).unwrap();
        assert_eq!(four.units_per_stage, vec![1, 1, 2]);
    }

    #[test]
    fn unit_validation() {
        assert!(SRUnitConfig::new(64, 64).validate().is_ok());
        assert!(SRUnitConfig::new(64, 30).validate().is_err());
        let mut odd = SRUnitConfig::new(64, 64);
        odd.group_count = 3;
        assert!(matches!(odd.validate(), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn stage_channels_must_decrease() {
        let mut cfg = ReasoningConfig::resnet_reference();
        cfg.stage_out_channels = vec![64, 64, 32];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bfr_forces_dilation_one() {
        let bfr = ReasoningConfig::vgg_reference().with_dilations_forced_to_one();
        assert!(bfr.unit_plan(128).unwrap().iter().all(|u| u.dilation_branch1 == 1));
    }

    #[test]
    fn input_size_must_divide() {
        let mut cfg = NetConfig::reference(BackboneKind::ResnetLike, AblationVariant::SrNet);
        cfg.input_size = 100;
        assert!(cfg.validate().is_err());
        cfg.input_size = 64;
        assert!(cfg.validate().is_ok());
    }
}
