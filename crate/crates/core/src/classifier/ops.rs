//! Checked entry points for the two convolution forms the network is built
//! from. Both operate on `[B, C, H, W]` inputs with valid (unpadded)
//! windows.

use crate::autograd::{conv2d_forward, conv2d_output_len, Array, ConvParams};
use crate::error::{Error, Result};

fn check(input: &Array, kernel: &Array, p: &ConvParams) -> Result<()> {
    let (xs, ws) = (input.shape(), kernel.shape());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::Invalid("convolution expects 4-D input and kernel".into()));
    }
    let g = p.groups;
    if g == 0 || xs[1] % g != 0 || ws[0] % g != 0 {
        return Err(Error::Invalid(format!(
            "{} input channels and {} output channels are not divisible by {g} groups",
            xs[1], ws[0]
        )));
    }
    if ws[1] != xs[1] / g {
        return Err(Error::Invalid(format!(
            "kernel expects {} channels per group, input has {}",
            ws[1],
            xs[1] / g
        )));
    }
    for axis in 0..2 {
        let len = conv2d_output_len(
            xs[2 + axis],
            ws[2 + axis],
            p.stride[axis],
            p.padding[2 * axis],
            p.padding[2 * axis + 1],
            p.dilation[axis],
        );
        if len.is_none_or(|l| l == 0) {
            return Err(Error::Invalid(format!(
                "kernel footprint {} exceeds the input extent {} on axis {}",
                p.dilation[axis] * (ws[2 + axis] - 1) + 1,
                xs[2 + axis],
                2 + axis
            )));
        }
    }
    Ok(())
}

/// Grouped convolution: output channel `k` of group `g` sums over the input
/// channels of that group only, `O[m,n,k] = Σ U[m+i, n+j, c] V[i, j, c, k]`.
pub fn depthwise_conv(input: &Array, kernel: &Array, groups: usize) -> Result<Array> {
    let p = ConvParams::valid().with_groups(groups);
    check(input, kernel, &p)?;
    Ok(conv2d_forward(input, kernel, &p))
}

/// Dilated convolution: taps spaced `dilation` apart inside the kernel
/// footprint, `Z[m,n] = Σ V[m + r_h i, n + r_w j] K[i, j]`.
pub fn dilated_conv(input: &Array, kernel: &Array, dilation: [usize; 2]) -> Result<Array> {
    if dilation.contains(&0) {
        return Err(Error::Invalid("dilation must be a positive integer".into()));
    }
    let p = ConvParams::valid().with_dilation(dilation);
    check(input, kernel, &p)?;
    Ok(conv2d_forward(input, kernel, &p))
}
