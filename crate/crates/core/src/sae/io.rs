//! SAE checkpoint format: magic "TSAE", config header, then W_enc, b_enc,
//! W_dec, b_dec, and (for tokenized SAEs) W_lookup.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_checkpoint, write_checkpoint};
use crate::numerics::Matrix;

use super::{SaeConfig, SaeParams, SaeVariant};

const SAE_MAGIC: &[u8; 4] = b"TSAE";
const SAE_VERSION: u32 = 1;

pub fn save_sae(params: &SaeParams<f32>, path: &Path) -> Result<()> {
    let c = &params.config;
    let header = vec![
        ("d_model".to_string(), c.d_model.to_string()),
        ("expansion".to_string(), c.expansion.to_string()),
        ("variant".to_string(), c.variant.to_string()),
        ("k".to_string(), c.k.to_string()),
        ("lambda".to_string(), format!("{:e}", c.lambda)),
        ("tokenized".to_string(), c.tokenized.to_string()),
        ("alpha".to_string(), format!("{:e}", c.alpha)),
        (
            "lookup_lr_multiplier".to_string(),
            format!("{:e}", c.lookup_lr_multiplier),
        ),
        (
            "lookup_truncation".to_string(),
            c.lookup_truncation
                .map_or("none".to_string(), |m| m.to_string()),
        ),
    ];
    let mut arrays: Vec<(String, &Matrix<f32>)> = vec![
        ("w_enc".to_string(), &params.w_enc),
        ("b_enc".to_string(), &params.b_enc),
        ("w_dec".to_string(), &params.w_dec),
        ("b_dec".to_string(), &params.b_dec),
    ];
    if let Some(lookup) = &params.w_lookup {
        arrays.push(("w_lookup".to_string(), lookup));
    }
    write_checkpoint(path, SAE_MAGIC, SAE_VERSION, &header, &arrays)
}

pub fn load_sae(path: &Path) -> Result<SaeParams<f32>> {
    let mut ck = read_checkpoint(path, SAE_MAGIC, SAE_VERSION)?;
    let variant = match ck.header_get("variant")? {
        "vanilla" => SaeVariant::Vanilla,
        "topk" => SaeVariant::TopK,
        other => return Err(Error::Format(format!("unknown variant {other}"))),
    };
    let truncation = match ck.header_get("lookup_truncation")? {
        "none" => None,
        s => Some(s.parse().map_err(|_| {
            Error::Format("unparseable header field lookup_truncation".into())
        })?),
    };
    let config = SaeConfig {
        d_model: ck.header_parse("d_model")?,
        expansion: ck.header_parse("expansion")?,
        variant,
        k: ck.header_parse("k")?,
        lambda: ck.header_parse("lambda")?,
        tokenized: ck.header_parse("tokenized")?,
        alpha: ck.header_parse("alpha")?,
        lookup_lr_multiplier: ck.header_parse("lookup_lr_multiplier")?,
        lookup_truncation: truncation,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let d = config.d_model;
    let n_f = config.n_features();
    let w_enc = ck.expect_array(0, "w_enc", d, n_f)?;
    let b_enc = ck.expect_array(1, "b_enc", 1, n_f)?;
    let w_dec = ck.expect_array(2, "w_dec", n_f, d)?;
    let b_dec = ck.expect_array(3, "b_dec", 1, d)?;
    let w_lookup = if config.tokenized {
        let vocab = match ck.arrays.get(4) {
            Some((_, m)) => m.rows(),
            None => return Err(Error::Format("tokenized SAE missing w_lookup".into())),
        };
        Some(ck.expect_array(4, "w_lookup", vocab, d)?)
    } else {
        None
    };
    Ok(SaeParams {
        config,
        w_enc,
        b_enc,
        w_dec,
        b_dec,
        w_lookup,
    })
}
