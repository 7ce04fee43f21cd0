//! Procedural image fixtures: a trivially separable two-class set and an
//! eight-class leaf-lesion proxy. Pixel values are in `[0, 255]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::{write_ppm, ImageTensor};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Class directory names of the eight-class proxy, in label order.
pub const LEAF_CLASSES: [&str; 8] = [
    "Anthracnose",
    "Bacterial Canker",
    "Cutting Weevil",
    "Die Back",
    "Gall Midge",
    "Healthy",
    "Powdery Mildew",
    "Sooty Mould",
];

const TAG_TWO: u64 = 0x54_574f; // "TWO"
const TAG_LEAF: u64 = 0x4c_4541_46; // "LEAF"

/// Two classes: class 0 is bright on the left half, class 1 on the right,
/// both with mild noise.
pub fn two_class(per_class: usize, size: usize, seed: u64) -> Vec<(ImageTensor, usize)> {
    let mut out = Vec::with_capacity(2 * per_class);
    for class in 0..2 {
        for i in 0..per_class {
            let mut rng = Rng::derive(seed, &[TAG_TWO, class as u64, i as u64]);
            let mut data = Vec::with_capacity(size * size * 3);
            for _y in 0..size {
                for x in 0..size {
                    let left = x < size / 2;
                    let bright = left == (class == 0);
                    let base = if bright { 200.0 } else { 40.0 };
                    for _c in 0..3 {
                        data.push((base + rng.uniform_range(-30.0, 30.0)) as f32);
                    }
                }
            }
            out.push((
                Tensor::from_vec(&[size, size, 3], data).expect("sized"),
                class,
            ));
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Spot {
    u: f64,
    v: f64,
    radius: f64,
    color: [f64; 3],
    /// Blend strength at the center.
    alpha: f64,
    /// Fraction of the radius over which the spot fades out.
    soft: f64,
    /// Optional halo color and outer radius multiple.
    halo: Option<([f64; 3], f64)>,
}

fn blend(px: &mut [f64; 3], color: [f64; 3], a: f64) {
    for c in 0..3 {
        px[c] = px[c] * (1.0 - a) + color[c] * a;
    }
}

fn normal(rng: &mut Rng) -> f64 {
    (0..4).map(|_| rng.uniform()).sum::<f64>() - 2.0
}

/// One proxy leaf of the given class, rendered at `size × size`.
pub fn leaf_image(class: usize, size: usize, rng: &mut Rng) -> ImageTensor {
    let s = size as f64;
    let cx = s * (0.5 + rng.uniform_range(-0.06, 0.06));
    let cy = s * (0.5 + rng.uniform_range(-0.06, 0.06));
    let theta = rng.uniform_range(0.0, std::f64::consts::PI);
    let semi_major = s * rng.uniform_range(0.36, 0.44);
    let aspect = rng.uniform_range(0.38, 0.5);
    let leaf = [
        rng.uniform_range(40.0, 80.0),
        rng.uniform_range(110.0, 160.0),
        rng.uniform_range(30.0, 60.0),
    ];
    let soil = [
        rng.uniform_range(90.0, 130.0),
        rng.uniform_range(80.0, 110.0),
        rng.uniform_range(60.0, 90.0),
    ];
    let in_leaf = |u: f64, v: f64| u * u + (v / aspect).powi(2) <= 1.0;
    let random_point = |rng: &mut Rng| loop {
        let u = rng.uniform_range(-0.85, 0.85);
        let v = rng.uniform_range(-aspect, aspect) * 0.8;
        if in_leaf(u, v) {
            return (u, v);
        }
    };

    let mut spots = Vec::new();
    let mut spot =
        |rng: &mut Rng, n: usize, r: (f64, f64), color: [f64; 3], alpha: f64, soft: f64, halo| {
            for _ in 0..n {
                let (u, v) = random_point(rng);
                spots.push(Spot {
                    u,
                    v,
                    radius: rng.uniform_range(r.0, r.1),
                    color,
                    alpha,
                    soft,
                    halo,
                });
            }
        };
    // Cut line for weevil damage: points with u beyond it are missing.
    let mut cut = f64::INFINITY;
    // Tip browning for die back: extent along +u.
    let mut tip = 0.0;
    match class {
        0 => {
            let n = 5 + rng.below(6) as usize;
            spot(rng, n, (0.05, 0.1), [45.0, 30.0, 20.0], 0.95, 0.3, None)
        }
        1 => {
            let n = 3 + rng.below(3) as usize;
            spot(
                rng,
                n,
                (0.05, 0.08),
                [30.0, 25.0, 20.0],
                1.0,
                0.2,
                Some(([210.0, 200.0, 60.0], 1.9)),
            )
        }
        2 => cut = rng.uniform_range(0.0, 0.35),
        3 => tip = rng.uniform_range(0.3, 0.6),
        4 => {
            let n = 14 + rng.below(10) as usize;
            spot(rng, n, (0.025, 0.04), [170.0, 50.0, 50.0], 0.9, 0.3, None)
        }
        5 => {}
        6 => {
            let n = 4 + rng.below(4) as usize;
            spot(rng, n, (0.15, 0.25), [235.0, 235.0, 230.0], 0.75, 0.8, None)
        }
        _ => {
            let n = 2 + rng.below(3) as usize;
            spot(rng, n, (0.25, 0.4), [15.0, 15.0, 15.0], 0.9, 0.5, None)
        }
    }

    let (sin, cos) = theta.sin_cos();
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let u = (dx * cos + dy * sin) / semi_major;
            let v = (-dx * sin + dy * cos) / semi_major;
            let mut px = soil;
            if in_leaf(u, v) && u <= cut {
                px = leaf;
                // Midrib and a gentle shade across the blade.
                if v.abs() < 0.012 + 0.01 * (1.0 - u.abs()) {
                    blend(&mut px, [150.0, 190.0, 110.0], 0.6);
                }
                let shade = 1.0 - 0.25 * (v / aspect).abs();
                px.iter_mut().for_each(|p| *p *= shade);
                if tip > 0.0 && u > 1.0 - tip {
                    let t = ((u - (1.0 - tip)) / tip).clamp(0.0, 1.0);
                    blend(&mut px, [110.0, 70.0, 35.0], 0.3 + 0.65 * t);
                }
                for sp in &spots {
                    let d = ((u - sp.u).powi(2) + (v - sp.v).powi(2)).sqrt();
                    if let Some((halo, outer)) = sp.halo {
                        let r_out = sp.radius * outer;
                        if d < r_out && d >= sp.radius {
                            blend(
                                &mut px,
                                halo,
                                0.7 * (1.0 - (d - sp.radius) / (r_out - sp.radius)),
                            );
                        }
                    }
                    if d < sp.radius {
                        let edge = sp.radius * (1.0 - sp.soft);
                        let a = if d <= edge {
                            sp.alpha
                        } else {
                            sp.alpha * (sp.radius - d) / (sp.radius - edge)
                        };
                        blend(&mut px, sp.color, a);
                    }
                }
            }
            for p in px {
                data.push((p + 8.0 * normal(rng)).clamp(0.0, 255.0) as f32);
            }
        }
    }
    Tensor::from_vec(&[size, size, 3], data).expect("sized")
}

/// `per_class` proxy leaves for each of the eight classes, in class order.
pub fn leaf_proxy(per_class: usize, size: usize, seed: u64) -> Vec<(ImageTensor, usize)> {
    (0..LEAF_CLASSES.len())
        .flat_map(|class| {
            (0..per_class).map(move |i| {
                let mut rng = Rng::derive(seed, &[TAG_LEAF, class as u64, i as u64]);
                (leaf_image(class, size, &mut rng), class)
            })
        })
        .collect()
}

/// Write images as `root/<class name>/<class>_<nnnn>.ppm`.
pub fn write_dataset(
    root: &Path,
    class_names: &[&str],
    images: &[(ImageTensor, usize)],
) -> Result<()> {
    for name in class_names {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut next = vec![0usize; class_names.len()];
    for (img, class) in images {
        let name = class_names
            .get(*class)
            .ok_or_else(|| Error::Argument(format!("label {class} has no class name")))?;
        write_ppm(
            &root
                .join(name)
                .join(format!("{class}_{:04}.ppm", next[*class])),
            img,
        )?;
        next[*class] += 1;
    }
    Ok(())
}
