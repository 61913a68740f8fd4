use super::{LayoutTensor, NoiseSchedule};
use crate::{Error, Result};

/// `x_t = sqrt(alpha_bar_t)·x0 + sqrt(1 - alpha_bar_t)·eps` on real slots.
pub fn forward_diffuse(
    x0: &LayoutTensor,
    t: usize,
    eps: &LayoutTensor,
    sched: &NoiseSchedule,
) -> Result<LayoutTensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_map(eps, |x, e| a * x + b * e)
}

/// Classifier-free guidance: `lambda·cond + (1 - lambda)·uncond`.
pub fn cfg_blend(eps_cond: &LayoutTensor, eps_uncond: &LayoutTensor, lambda: f64) -> Result<LayoutTensor> {
    check_lambda(lambda)?;
    // exact endpoints, no rounding through the affine form
    if lambda == 1.0 {
        return eps_cond.zip_map(eps_uncond, |c, _| c);
    }
    if lambda == 0.0 {
        return eps_cond.zip_map(eps_uncond, |_, u| u);
    }
    eps_cond.zip_map(eps_uncond, |c, u| lambda * c + (1.0 - lambda) * u)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::validation(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Inverts [`forward_diffuse`] for a noise estimate, without clamping.
pub fn predict_x0_unclamped(
    x_t: &LayoutTensor,
    eps_hat: &LayoutTensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LayoutTensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_t.zip_map(eps_hat, |x, e| (x - b * e) / a)
}

/// `x0_hat = (x_t - sqrt(1 - alpha_bar_t)·eps_hat) / sqrt(alpha_bar_t)`, clamped to `[-1, 1]`.
pub fn predict_x0(
    x_t: &LayoutTensor,
    eps_hat: &LayoutTensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LayoutTensor> {
    Ok(predict_x0_unclamped(x_t, eps_hat, t, sched)?.map(|v| v.clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::cosine_schedule;
    use crate::rng;

    fn layout(vals: &[[f64; 2]]) -> LayoutTensor {
        let mut t = LayoutTensor::zeros(2, 4, &[4, 3]).unwrap();
        let slots: Vec<usize> = t.real_slots().collect();
        for (s, v) in slots.into_iter().zip(vals.iter().cycle()) {
            t.set(s, *v);
        }
        t
    }

    #[test]
    fn zero_noise_scales_x0() {
        let s = cosine_schedule(1000, 0.008).unwrap();
        let x0 = layout(&[[0.3, -0.2], [0.7, 0.1]]);
        let xt = forward_diffuse(&x0, 400, &x0.zeroed(), &s).unwrap();
        let a = s.alpha_bar(400).sqrt();
        for (u, v) in xt.values().iter().zip(x0.values()) {
            assert_eq!(*u, a * v);
        }
        assert!(xt.padding_is_zero());
    }

    #[test]
    fn early_step_is_nearly_clean() {
        let s = cosine_schedule(1000, 0.008).unwrap();
        let x0 = layout(&[[0.3, -0.2]]);
        let eps = x0.gaussian_like(&mut rng::stream(1, 0));
        let xt = forward_diffuse(&x0, 1, &eps, &s).unwrap();
        for (u, v) in xt.values().iter().zip(x0.values()) {
            assert!((u - v).abs() < 0.03);
        }
    }

    #[test]
    fn step_range_is_checked() {
        let s = cosine_schedule(10, 0.008).unwrap();
        let x0 = layout(&[[0.0, 0.0]]);
        assert!(forward_diffuse(&x0, 0, &x0, &s).is_err());
        assert!(forward_diffuse(&x0, 11, &x0, &s).is_err());
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let c = layout(&[[2.0, 2.0]]);
        let u = layout(&[[0.0, 0.0]]);
        assert_eq!(cfg_blend(&c, &u, 1.0).unwrap(), c);
        assert_eq!(cfg_blend(&c, &u, 0.0).unwrap(), u);
        let mid = cfg_blend(&c, &u, 0.5).unwrap();
        assert!(mid.real_slots().all(|s| mid.get(s) == [1.0, 1.0]));
        assert!(cfg_blend(&c, &u, 1.5).is_err());
        assert!(cfg_blend(&c, &u, -0.1).is_err());
        let other = LayoutTensor::zeros(2, 4, &[3]).unwrap();
        assert!(cfg_blend(&c, &other, 0.5).is_err());
    }

    #[test]
    fn predict_x0_inverts_forward() {
        let s = cosine_schedule(1000, 0.008).unwrap();
        let x0 = layout(&[[0.3, -0.2], [-0.8, 0.6]]);
        let eps = x0.gaussian_like(&mut rng::stream(9, 0));
        for t in [1, 10, 500, 990] {
            let xt = forward_diffuse(&x0, t, &eps, &s).unwrap();
            let back = predict_x0_unclamped(&xt, &eps, t, &s).unwrap();
            for (u, v) in back.values().iter().zip(x0.values()) {
                assert!((u - v).abs() < 1e-6, "t={t}");
            }
        }
    }

    #[test]
    fn predict_x0_clamps() {
        let s = cosine_schedule(1000, 0.008).unwrap();
        let xt = layout(&[[5.0, -7.0]]);
        let out = predict_x0(&xt, &xt.zeroed(), 300, &s).unwrap();
        assert!(out.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
