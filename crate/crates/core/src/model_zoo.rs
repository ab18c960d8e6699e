//! Built-in model family builders and named demo graphs.
//!
//! Two depthwise-separable CNN families are generated parametrically from
//! a width multiplier, input resolution and dtype. Channel rounding follows
//! the published recipes for each family and is evaluated in exact integer
//! arithmetic so that every build is reproducible.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model_graph::{
    DType, OpKind, OpNode, OpParams, Padding, TensorGraph, TensorKind, TensorSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    V1,
    V2,
}

/// A parsed zoo model specifier.
///
/// Accepted forms: `v1-0.25-128-u8` (canonical) and
/// `mobilenet_v1:0.25:128:u8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZooSpec {
    pub family: Family,
    pub alpha_num: u64,
    pub alpha_den: u64,
    pub resolution: u64,
    pub dtype: DType,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn parse_alpha(s: &str) -> Result<(u64, u64)> {
    let bad = || Error::Zoo(format!("bad width multiplier `{s}`"));
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let int: u64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let mut num = int;
    let mut den = 1u64;
    for c in frac_part.chars() {
        let d = c.to_digit(10).ok_or_else(bad)? as u64;
        num = num * 10 + d;
        den *= 10;
    }
    if num == 0 {
        return Err(bad());
    }
    let g = gcd(num, den);
    Ok((num / g, den / g))
}

fn format_alpha(num: u64, den: u64) -> String {
    if (num * 100) % den == 0 {
        let pct = num * 100 / den;
        let (int, fr) = (pct / 100, pct % 100);
        if fr == 0 {
            format!("{int}.0")
        } else if fr % 10 == 0 {
            format!("{int}.{}", fr / 10)
        } else {
            format!("{int}.{fr:02}")
        }
    } else {
        format!("{num}/{den}")
    }
}

impl ZooSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = if spec.contains(':') {
            spec.split(':').collect()
        } else {
            spec.splitn(4, '-').collect()
        };
        let [family, alpha, resolution, dtype] = parts.as_slice() else {
            return Err(Error::Zoo(format!(
                "bad model spec `{spec}` (want family-alpha-resolution-dtype)"
            )));
        };
        let family = match *family {
            "v1" | "mobilenet_v1" => Family::V1,
            "v2" | "mobilenet_v2" => Family::V2,
            other => return Err(Error::Zoo(format!("unknown model family `{other}`"))),
        };
        let (alpha_num, alpha_den) = parse_alpha(alpha)?;
        let resolution: u64 = resolution
            .parse()
            .map_err(|_| Error::Zoo(format!("bad resolution `{resolution}`")))?;
        if resolution == 0 || resolution % 32 != 0 {
            return Err(Error::Zoo(format!(
                "resolution {resolution} must be a positive multiple of 32"
            )));
        }
        let dtype =
            DType::from_str(dtype).map_err(|_| Error::Zoo(format!("bad dtype `{dtype}`")))?;
        Ok(ZooSpec {
            family,
            alpha_num,
            alpha_den,
            resolution,
            dtype,
        })
    }

    pub fn canonical_name(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            match self.family {
                Family::V1 => "v1",
                Family::V2 => "v2",
            },
            format_alpha(self.alpha_num, self.alpha_den),
            self.resolution,
            self.dtype
        )
    }
}

/// Canonical specs of the bundled benchmark models.
pub fn zoo_list() -> Vec<String> {
    [
        "v1-1.0-224-f32",
        "v1-1.0-224-u8",
        "v1-0.25-224-f32",
        "v1-0.25-128-u8",
        "v2-0.35-224-f32",
        "v2-1.0-224-f32",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

// ---------------------------------------------------------------------------
// Graph assembly helpers
// ---------------------------------------------------------------------------

struct Builder {
    dtype: DType,
    tensors: Vec<TensorSpec>,
    ops: Vec<OpNode>,
}

impl Builder {
    fn new(dtype: DType) -> Self {
        Builder {
            dtype,
            tensors: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn tensor(&mut self, id: &str, shape: Vec<u64>, kind: TensorKind) -> String {
        self.tensors.push(TensorSpec {
            id: id.to_string(),
            shape,
            dtype: self.dtype,
            kind,
        });
        id.to_string()
    }

    fn op(&mut self, id: &str, kind: OpKind, inputs: Vec<String>, output: &str, params: OpParams) {
        self.ops.push(OpNode {
            id: id.to_string(),
            kind,
            inputs,
            output: output.to_string(),
            params,
        });
    }

    fn finish(self, name: &str) -> Result<TensorGraph> {
        TensorGraph::new(name, self.tensors, self.ops)
    }
}

fn conv_params(k: u64, depth: u64, stride: u64, padding: Padding) -> OpParams {
    OpParams {
        kernel: [k, k, depth],
        stride: [stride, stride],
        dilation: [1, 1],
        padding,
    }
}

// ---------------------------------------------------------------------------
// Family V1
// ---------------------------------------------------------------------------

const V1_DW_STRIDES: [u64; 13] = [1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1];
const V1_PW_CHANNELS: [u64; 13] = [
    64, 128, 128, 256, 256, 512, 512, 512, 512, 512, 512, 1024, 1024,
];

fn build_v1(spec: &ZooSpec) -> Result<TensorGraph> {
    // Width scaling with a floor of 8 channels.
    let c = |base: u64| -> u64 { ((base * spec.alpha_num) / spec.alpha_den).max(8) };
    let mut b = Builder::new(spec.dtype);
    let res = spec.resolution;

    let input = b.tensor("input", vec![res, res, 3], TensorKind::Input);
    let mut h = res / 2;
    let mut ch = c(32);
    let mut cur = b.tensor("conv1_out", vec![h, h, ch], TensorKind::Intermediate);
    b.op(
        "conv1",
        OpKind::Conv2d,
        vec![input],
        "conv1_out",
        conv_params(3, 3, 2, Padding::Same),
    );

    for i in 0..13 {
        let n = i + 1;
        let stride = V1_DW_STRIDES[i];
        h /= stride;
        let dw_id = format!("dw{n}");
        let dw_out = format!("dw{n}_out");
        b.tensor(&dw_out, vec![h, h, ch], TensorKind::Intermediate);
        b.op(
            &dw_id,
            OpKind::DepthwiseConv2d,
            vec![cur],
            &dw_out,
            conv_params(3, 1, stride, Padding::Same),
        );
        let pw_ch = c(V1_PW_CHANNELS[i]);
        let pw_id = format!("pw{n}");
        let pw_out = format!("pw{n}_out");
        b.tensor(&pw_out, vec![h, h, pw_ch], TensorKind::Intermediate);
        b.op(
            &pw_id,
            OpKind::Conv2d,
            vec![dw_out],
            &pw_out,
            conv_params(1, ch, 1, Padding::Same),
        );
        cur = pw_out;
        ch = pw_ch;
    }

    b.tensor("pool_out", vec![1, 1, ch], TensorKind::Intermediate);
    b.op(
        "pool",
        OpKind::AvgPool,
        vec![cur],
        "pool_out",
        OpParams {
            kernel: [h, h, 1],
            stride: [1, 1],
            dilation: [1, 1],
            padding: Padding::Valid,
        },
    );
    b.tensor("fc_out", vec![1001], TensorKind::Intermediate);
    b.op(
        "fc",
        OpKind::FullyConnected,
        vec!["pool_out".into()],
        "fc_out",
        OpParams::default(),
    );
    b.tensor("probs", vec![1001], TensorKind::Output);
    b.op(
        "softmax",
        OpKind::Softmax,
        vec!["fc_out".into()],
        "probs",
        OpParams::default(),
    );

    b.finish(&spec.canonical_name())
}

// ---------------------------------------------------------------------------
// Family V2
// ---------------------------------------------------------------------------

/// Channel rounding for the V2 family: round to the nearest multiple of 8
/// (never below 8), bumping up when rounding lost more than 10%.
fn make_divisible(base_ch: u64, num: u64, den: u64) -> u64 {
    let v_num = base_ch * num; // value = v_num / den
    let mut out = ((v_num + 4 * den) / (8 * den)) * 8;
    out = out.max(8);
    if out * den * 10 < 9 * v_num {
        out += 8;
    }
    out
}

/// (expansion factor, base output channels, repeats, first stride)
const V2_GROUPS: [(u64, u64, u64, u64); 7] = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
];

fn build_v2(spec: &ZooSpec) -> Result<TensorGraph> {
    let md = |base: u64| make_divisible(base, spec.alpha_num, spec.alpha_den);
    let mut b = Builder::new(spec.dtype);
    let res = spec.resolution;

    let input = b.tensor("input", vec![res, res, 3], TensorKind::Input);
    let mut h = res / 2;
    let mut ch = md(32);
    let mut cur = b.tensor("stem_out", vec![h, h, ch], TensorKind::Intermediate);
    b.op(
        "stem",
        OpKind::Conv2d,
        vec![input],
        "stem_out",
        conv_params(3, 3, 2, Padding::Same),
    );

    for (gi, &(t, base_out, repeats, first_stride)) in V2_GROUPS.iter().enumerate() {
        let out_ch = md(base_out);
        for r in 0..repeats {
            let block = if repeats == 1 {
                format!("b{}", gi + 1)
            } else {
                format!("b{}{}", gi + 1, (b'a' + r as u8) as char)
            };
            let stride = if r == 0 { first_stride } else { 1 };
            let mut block_in = cur.clone();
            let mut hid = ch;

            if t > 1 {
                hid = ch * t;
                let id = format!("{block}_expand");
                let out = format!("{block}_expand_out");
                b.tensor(&out, vec![h, h, hid], TensorKind::Intermediate);
                b.op(&id, OpKind::Conv2d, vec![block_in], &out, conv_params(1, ch, 1, Padding::Same));
                block_in = out;
            }

            h /= stride;
            let dw_id = format!("{block}_dw");
            let dw_out = format!("{block}_dw_out");
            b.tensor(&dw_out, vec![h, h, hid], TensorKind::Intermediate);
            b.op(
                &dw_id,
                OpKind::DepthwiseConv2d,
                vec![block_in],
                &dw_out,
                conv_params(3, 1, stride, Padding::Same),
            );

            let pr_id = format!("{block}_project");
            let pr_out = format!("{block}_project_out");
            b.tensor(&pr_out, vec![h, h, out_ch], TensorKind::Intermediate);
            b.op(
                &pr_id,
                OpKind::Conv2d,
                vec![dw_out],
                &pr_out,
                conv_params(1, hid, 1, Padding::Same),
            );

            // Residual connection when the block preserves shape.
            if stride == 1 && ch == out_ch {
                let add_id = format!("{block}_add");
                let add_out = format!("{block}_add_out");
                b.tensor(&add_out, vec![h, h, out_ch], TensorKind::Intermediate);
                b.op(
                    &add_id,
                    OpKind::ElementwiseBinary,
                    vec![pr_out, cur],
                    &add_out,
                    OpParams::default(),
                );
                cur = add_out;
            } else {
                cur = pr_out;
            }
            ch = out_ch;
        }
    }

    let last_ch = md(1280).max(1280);
    b.tensor("head_conv_out", vec![h, h, last_ch], TensorKind::Intermediate);
    b.op(
        "head_conv",
        OpKind::Conv2d,
        vec![cur],
        "head_conv_out",
        conv_params(1, ch, 1, Padding::Same),
    );
    b.tensor("pool_out", vec![1, 1, last_ch], TensorKind::Intermediate);
    b.op(
        "pool",
        OpKind::AvgPool,
        vec!["head_conv_out".into()],
        "pool_out",
        OpParams {
            kernel: [h, h, 1],
            stride: [1, 1],
            dilation: [1, 1],
            padding: Padding::Valid,
        },
    );
    b.tensor("fc_out", vec![1001], TensorKind::Intermediate);
    b.op(
        "fc",
        OpKind::FullyConnected,
        vec!["pool_out".into()],
        "fc_out",
        OpParams::default(),
    );
    b.tensor("probs", vec![1001], TensorKind::Output);
    b.op(
        "softmax",
        OpKind::Softmax,
        vec!["fc_out".into()],
        "probs",
        OpParams::default(),
    );

    b.finish(&spec.canonical_name())
}

/// Build a zoo model from its parsed spec.
pub fn zoo_build(spec: &ZooSpec) -> Result<TensorGraph> {
    match spec.family {
        Family::V1 => build_v1(spec),
        Family::V2 => build_v2(spec),
    }
}

// ---------------------------------------------------------------------------
// Demo graphs
// ---------------------------------------------------------------------------

/// Small single-op graphs for demos and CLI smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoKind {
    Relu,
    Matmul,
    Depthwise,
    Conv2d,
}

impl FromStr for DemoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(DemoKind::Relu),
            "matmul" => Ok(DemoKind::Matmul),
            "depthwise" => Ok(DemoKind::Depthwise),
            "conv2d" => Ok(DemoKind::Conv2d),
            other => Err(Error::Parse(format!("unknown demo `{other}`"))),
        }
    }
}

pub fn demo_graph(kind: DemoKind) -> TensorGraph {
    let mut b = Builder::new(DType::F32);
    let name = match kind {
        DemoKind::Relu => {
            b.tensor("t_in", vec![4096], TensorKind::Input);
            b.tensor("t_out", vec![4096], TensorKind::Output);
            b.op(
                "relu",
                OpKind::ElementwiseUnary,
                vec!["t_in".into()],
                "t_out",
                OpParams::default(),
            );
            "demo-relu"
        }
        DemoKind::Matmul => {
            b.tensor("t_in", vec![64], TensorKind::Input);
            b.tensor("t_out", vec![64], TensorKind::Output);
            b.op(
                "matmul",
                OpKind::FullyConnected,
                vec!["t_in".into()],
                "t_out",
                OpParams::default(),
            );
            "demo-matmul"
        }
        DemoKind::Depthwise => {
            b.tensor("t_in", vec![112, 112, 96], TensorKind::Input);
            b.tensor("t_out", vec![56, 56, 96], TensorKind::Output);
            b.op(
                "dw",
                OpKind::DepthwiseConv2d,
                vec!["t_in".into()],
                "t_out",
                conv_params(3, 1, 2, Padding::Same),
            );
            "demo-depthwise"
        }
        DemoKind::Conv2d => {
            b.tensor("t_in", vec![224, 224, 3], TensorKind::Input);
            b.tensor("t_out", vec![112, 112, 32], TensorKind::Output);
            b.op(
                "conv",
                OpKind::Conv2d,
                vec!["t_in".into()],
                "t_out",
                conv_params(3, 3, 2, Padding::Same),
            );
            "demo-conv2d"
        }
    };
    b.finish(name).expect("demo graphs are well-formed")
}
