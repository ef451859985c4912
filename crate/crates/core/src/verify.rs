//! Finite-difference gradient suite over every differentiable operation,
//! every composite block and a full toy model.

use crate::autodiff::{check_gradients, check_model_gradients, GradCheck, Parameterized};
use crate::blocks::{record_mwpa, GdfnWeights, MixerToggles, MspConfig, PlainFfn, WcpWeights};
use crate::error::Result;
use crate::layers::Init;
use crate::model::{Ablation, BlockWeights, GestFormerModel, ModelConfig};
use crate::tensor::Tensor;

/// Uniform(-1, 1) tensor; `fan_in = 1` gives the unit bound.
fn rand(init: &mut Init, dims: &[usize]) -> Tensor {
    init.uniform(dims.to_vec(), 1)
}

/// Checks of the tape primitives.
pub fn primitive_checks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut r = Init::new(seed);
    let mut out = Vec::new();

    let (a, b) = (rand(&mut r, &[4, 4]), rand(&mut r, &[4, 3]));
    out.push(check_gradients("matmul", &[a, b], |t, v| t.matmul(v[0], v[1]))?);

    let (x, w, bias) = (rand(&mut r, &[4, 4]), rand(&mut r, &[3, 4]), rand(&mut r, &[3]));
    out.push(check_gradients("linear", &[x, w, bias], |t, v| {
        t.linear(v[0], v[1], Some(v[2]))
    })?);

    let (a, b) = (rand(&mut r, &[4, 4]), rand(&mut r, &[4, 4]));
    out.push(check_gradients("add", &[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))?);
    out.push(check_gradients("sub", &[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]))?);
    out.push(check_gradients("mul", &[a.clone(), b], |t, v| t.mul(v[0], v[1]))?);
    out.push(check_gradients("scale", std::slice::from_ref(&a), |t, v| Ok(t.scale(v[0], -1.75)))?);
    out.push(check_gradients("sum", std::slice::from_ref(&a), |t, v| Ok(t.sum(v[0])))?);
    out.push(check_gradients("mean_axis", std::slice::from_ref(&a), |t, v| t.mean_axis(v[0], 0))?);
    out.push(check_gradients("reshape", std::slice::from_ref(&a), |t, v| t.reshape(v[0], [2, 8]))?);

    let g = rand(&mut r, &[4, 4]).map(|v| 2.5 * v);
    out.push(check_gradients("gelu", &[g], |t, v| Ok(t.gelu(v[0])))?);

    let (x, s, sh) = (rand(&mut r, &[4, 4]), rand(&mut r, &[4]), rand(&mut r, &[4]));
    out.push(check_gradients("layer_norm", &[x, s, sh], |t, v| {
        t.layer_norm(v[0], v[1], v[2])
    })?);

    out.push(check_gradients("softmax", &[rand(&mut r, &[4, 4])], |t, v| {
        Ok(t.softmax(v[0]))
    })?);

    out.push(check_gradients("cross_entropy", &[rand(&mut r, &[4, 4])], |t, v| {
        t.cross_entropy(v[0], &[0, 3, 1, 1])
    })?);

    let (x, k) = (rand(&mut r, &[2, 4, 4]), rand(&mut r, &[2, 3, 3]));
    out.push(check_gradients("depthwise_conv2d", &[x, k], |t, v| {
        t.depthwise_conv2d(v[0], v[1])
    })?);

    let (x, w) = (rand(&mut r, &[3, 4, 4]), rand(&mut r, &[2, 3]));
    out.push(check_gradients("pointwise_conv2d", &[x, w], |t, v| {
        t.pointwise_conv2d(v[0], v[1])
    })?);

    let (x, b) = (rand(&mut r, &[2, 4, 4]), rand(&mut r, &[2]));
    out.push(check_gradients("add_channel_bias", &[x, b], |t, v| {
        t.add_channel_bias(v[0], v[1])
    })?);

    for k in [3usize, 5, 7] {
        let x = rand(&mut r, &[1, 4, 4]);
        out.push(check_gradients(&format!("avg_pool2d_{k}"), &[x], |t, v| {
            t.avg_pool2d(v[0], k)
        })?);
    }

    for dims in [[1usize, 4, 4], [1, 5, 7]] {
        let x = rand(&mut r, &dims);
        let name = format!("dwt2_{}x{}", dims[1], dims[2]);
        out.push(check_gradients(&name, &[x], |t, v| {
            let bands = t.dwt2(v[0])?;
            // stack all four planes so each band's adjoint is exercised
            let flat: Vec<_> = bands
                .iter()
                .map(|&b| {
                    let n = t.value(b).numel();
                    t.reshape(b, [n])
                })
                .collect::<Result<_>>()?;
            t.stack_rows(&flat)
        })?);
    }

    for (h, w) in [(4usize, 4usize), (5, 7)] {
        let (h2, w2) = crate::wavelet::subband_extents(h, w);
        let bands: Vec<Tensor> = (0..4).map(|_| rand(&mut r, &[1, h2, w2])).collect();
        out.push(check_gradients(&format!("idwt2_{h}x{w}"), &bands, |t, v| {
            t.idwt2([v[0], v[1], v[2], v[3]], h, w)
        })?);
    }

    Ok(out)
}

/// Checks of WCP, MSP, MWPA, GDFN, the plain FFN and one MWPT stage on
/// 4×8 maps, with respect to the input and every block parameter.
pub fn block_checks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut r = Init::new(seed);
    let (m, k) = (4, 8);
    let mut out = Vec::new();

    let x = rand(&mut r, &[m, k]);
    let mut wcp = WcpWeights::new("wcp", &mut r);
    perturb(&mut wcp, &mut r);
    out.push(check_gradients("wcp", std::slice::from_ref(&x), |t, v| wcp.record(t, v[0]))?);
    out.push(with_input("wcp_params", &wcp, &x, |t, w, x| w.record(t, x))?);

    out.push(check_gradients("msp", std::slice::from_ref(&x), |t, v| {
        MspConfig::default().record(t, v[0])
    })?);

    for (name, toggles) in [
        ("mwpa", MixerToggles::ALL),
        ("mwpa_no_msp", MixerToggles { wcp: true, msp: false }),
        ("mwpa_no_wcp", MixerToggles { wcp: false, msp: true }),
        ("mwpa_plain", MixerToggles { wcp: false, msp: false }),
    ] {
        out.push(with_input(name, &wcp, &x, |t, w, x| {
            record_mwpa(t, x, Some(w), toggles)
        })?);
    }

    let mut gdfn = GdfnWeights::new("gdfn", k, 2, &mut r);
    perturb(&mut gdfn, &mut r);
    out.push(with_input("gdfn", &gdfn, &x, |t, w, x| w.record(t, x))?);

    let mut ffn = PlainFfn::new("ffn", k, 2, &mut r);
    perturb(&mut ffn, &mut r);
    out.push(with_input("ffn_plain", &ffn, &x, |t, w, x| w.record(t, x))?);

    for bl in [8usize, 1] {
        let ablation = Ablation::baseline(bl).expect("valid baseline");
        let cfg = ModelConfig {
            frames: m,
            embed_dim: k,
            ablation,
            ..ModelConfig::toy()
        };
        let mut stage = BlockWeights::new("stage", &cfg, &mut r);
        perturb(&mut stage, &mut r);
        out.push(with_input(&format!("mwpt_stage_bl{bl}"), &stage, &x, |t, w, x| {
            w.record(t, x, ablation)
        })?);
    }
    Ok(out)
}

/// Full-model check of the class posterior with respect to the input
/// features, at a perturbed parameter point. Parameter gradients are covered
/// stage by stage in [`block_checks`]: some stage parameters (the HL-branch
/// biases) leave the posterior exactly invariant, so their numeric side is
/// pure rounding noise.
pub fn model_check(config: &ModelConfig, seed: u64, name: &str) -> Result<GradCheck> {
    let mut r = Init::new(seed ^ 0x9e37_79b9);
    let mut model = GestFormerModel::new(config.clone(), seed)?;
    perturb(&mut model, &mut r);
    let x = rand(&mut r, &[config.frames, config.input_dim]);
    check_gradients(name, &[x], |t, v| model.record_posterior(t, v[0]))
}

/// Runs primitives, blocks, the toy model and every ablation baseline of
/// the toy model.
pub fn full_suite(config: &ModelConfig, seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = primitive_checks(seed)?;
    out.extend(block_checks(seed)?);
    out.push(model_check(config, seed, "model")?);
    for bl in 1..=8 {
        let cfg = ModelConfig {
            ablation: Ablation::baseline(bl).expect("valid baseline"),
            ..config.clone()
        };
        out.push(model_check(&cfg, seed + bl as u64, &format!("model_bl{bl}"))?);
    }
    Ok(out)
}

/// Shifts every parameter by uniform(±0.25) so the check runs at a generic
/// point. Zero biases and unit norms at init make some gradients vanish
/// exactly, leaving only rounding noise for the numeric side.
fn perturb<M: Parameterized + ?Sized>(module: &mut M, r: &mut Init) {
    for p in module.params_mut() {
        let d = r.uniform(p.value.dims().to_vec(), 16);
        for (v, d) in p.value.data_mut().iter_mut().zip(d.data()) {
            *v += d;
        }
    }
}

/// Checks a parameterised module together with an extra input tensor that
/// is treated as one more parameter.
fn with_input<M, F>(name: &str, module: &M, input: &Tensor, f: F) -> Result<GradCheck>
where
    M: crate::autodiff::Parameterized + Clone,
    F: Fn(&mut crate::autodiff::Tape, &M, crate::autodiff::Var) -> Result<crate::autodiff::Var>,
{
    #[derive(Clone)]
    struct WithInput<M> {
        module: M,
        input: crate::autodiff::Param,
    }
    impl<M: crate::autodiff::Parameterized> crate::autodiff::Parameterized for WithInput<M> {
        fn params(&self) -> Vec<&crate::autodiff::Param> {
            let mut p = vec![&self.input];
            p.extend(self.module.params());
            p
        }
        fn params_mut(&mut self) -> Vec<&mut crate::autodiff::Param> {
            let mut p = vec![&mut self.input];
            p.extend(self.module.params_mut());
            p
        }
    }
    let wrapped = WithInput {
        module: module.clone(),
        input: crate::autodiff::Param::new("__input", input.clone()),
    };
    check_model_gradients(name, &wrapped, |t, w| {
        let x = t.param(&w.input);
        f(t, &w.module, x)
    })
}
