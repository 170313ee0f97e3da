//! Encoder checkpoints on top of [`Archive`].

use std::path::Path;

use super::encoder::{EncoderConfig, EncoderParams};
use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const KIND: &str = "encoder";

/// Training provenance stored with the weights.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub steps: usize,
}

pub fn to_archive<T: Scalar>(params: &EncoderParams<T>, info: &CheckpointInfo) -> Archive<T> {
    let c = &params.config;
    let mut a = Archive::new(KIND)
        .with_meta("seed", info.seed)
        .with_meta("steps", info.steps)
        .with_meta("input_len", c.input_len)
        .with_meta("channels", c.channels)
        .with_meta("rep_dim", c.rep_dim)
        .with_meta("proj_hidden", c.proj_hidden)
        .with_meta("proj_dim", c.proj_dim)
        .with_meta("temperature", c.temperature)
        .with_meta("leaky_slope", c.leaky_slope)
        .with_meta("bn_eps", c.bn_eps)
        .with_meta("bn_momentum", c.bn_momentum);
    let names = EncoderParams::<T>::param_names().into_iter().chain(EncoderParams::<T>::buffer_names());
    for (name, t) in names.zip(params.params().into_iter().chain(params.buffers())) {
        a.push(name, t.clone());
    }
    a
}

pub fn from_archive<T: Scalar>(a: &Archive<T>) -> Result<(EncoderParams<T>, CheckpointInfo)> {
    if a.kind != KIND {
        return Err(Error::Parse(format!("expected an {KIND} archive, found {}", a.kind)));
    }
    let config = EncoderConfig {
        input_len: a.meta_parse("input_len")?,
        channels: a.meta_parse("channels")?,
        rep_dim: a.meta_parse("rep_dim")?,
        proj_hidden: a.meta_parse("proj_hidden")?,
        proj_dim: a.meta_parse("proj_dim")?,
        temperature: a.meta_parse("temperature")?,
        leaky_slope: a.meta_parse("leaky_slope")?,
        bn_eps: a.meta_parse("bn_eps")?,
        bn_momentum: a.meta_parse("bn_momentum")?,
    };
    // Build the skeleton from the config, then overwrite every tensor.
    let mut params = EncoderParams::<T>::new(config, &mut crate::rng::seeded(0))?;
    let names: Vec<&str> = EncoderParams::<T>::param_names().into_iter().chain(EncoderParams::<T>::buffer_names()).collect();
    let slots = {
        let EncoderParams { conv1, bn1, conv2, bn2, conv3, fc, proj1, proj2, .. } = &mut params;
        vec![
            &mut conv1.weight,
            &mut conv1.bias,
            &mut bn1.gamma,
            &mut bn1.beta,
            &mut conv2.weight,
            &mut conv2.bias,
            &mut bn2.gamma,
            &mut bn2.beta,
            &mut conv3.weight,
            &mut conv3.bias,
            &mut fc.weight,
            &mut fc.bias,
            &mut proj1.weight,
            &mut proj1.bias,
            &mut proj2.weight,
            &mut proj2.bias,
            &mut bn1.running_mean,
            &mut bn1.running_var,
            &mut bn2.running_mean,
            &mut bn2.running_var,
        ]
    };
    for (name, slot) in names.into_iter().zip(slots) {
        let t = a.tensor(name)?;
        if t.shape() != slot.shape() {
            return Err(Error::ShapeMismatch { expected: slot.shape().to_vec(), got: t.shape().to_vec() });
        }
        *slot = t.clone();
    }
    Ok((params, CheckpointInfo { seed: a.meta_parse("seed")?, steps: a.meta_parse("steps")? }))
}

pub fn save<T: Scalar>(params: &EncoderParams<T>, info: &CheckpointInfo, path: &Path) -> Result<()> {
    to_archive(params, info).save(path)
}

pub fn load<T: Scalar>(path: &Path) -> Result<(EncoderParams<T>, CheckpointInfo)> {
    from_archive(&Archive::load(path)?)
}
