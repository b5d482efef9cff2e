use crate::error::{contract_err, shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Integer label map, row-major `[N, H, W]` (or `[D, H, W]` for a volume).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    dims: [usize; 3],
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.contains(&0) || n != data.len() {
            return Err(shape_err!("label map dims {dims:?} do not match {} labels", data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, vec![0; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    /// Plane `i` along the first axis.
    pub fn plane(&self, i: usize) -> &[u8] {
        let p = self.dims[1] * self.dims[2];
        &self.data[i * p..(i + 1) * p]
    }
}

/// Which classes a Dice or IoU score looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassSet {
    /// Any nonzero label against background.
    BinaryForeground,
    /// Unweighted mean over classes present in either mask.
    PerClassMean,
}

/// `counts[t * C + p]` is the number of pixels with truth `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    num_classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_masks(pred: &LabelMap, truth: &LabelMap, num_classes: usize) -> Result<Self> {
        let mut c = Self::new(num_classes);
        c.add(pred, truth)?;
        Ok(c)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, pred: &LabelMap, truth: &LabelMap) -> Result<()> {
        if pred.dims != truth.dims {
            return Err(shape_err!("mask dims differ: {:?} vs {:?}", pred.dims, truth.dims));
        }
        self.add_labels(&pred.data, &truth.data)
    }

    /// Accumulates flat label slices of equal length.
    pub fn add_labels(&mut self, pred: &[u8], truth: &[u8]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(shape_err!("mask lengths differ: {} vs {}", pred.len(), truth.len()));
        }
        let c = self.num_classes;
        let mut local = vec![0u64; c * c];
        for (&p, &t) in pred.iter().zip(truth) {
            let (p, t) = (p as usize, t as usize);
            if p >= c || t >= c {
                return Err(Error::Data(format!(
                    "label {} outside [0, {c})",
                    if p >= c { p } else { t }
                )));
            }
            local[t * c + p] += 1;
        }
        self.counts.iter_mut().zip(local).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(contract_err!(
                "cannot merge confusion matrices over {} and {} classes",
                self.num_classes,
                other.num_classes
            ));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `(|P ∩ T|, |P|, |T|)` for one class.
    pub fn class_counts(&self, k: usize) -> (u64, u64, u64) {
        let c = self.num_classes;
        let inter = self.count(k, k);
        let pred = (0..c).map(|t| self.count(t, k)).sum();
        let truth = (0..c).map(|p| self.count(k, p)).sum();
        (inter, pred, truth)
    }

    /// `(|P ∩ T|, |P|, |T|)` for the foreground (label > 0).
    pub fn foreground_counts(&self) -> (u64, u64, u64) {
        let c = self.num_classes;
        let (mut inter, mut pred, mut truth) = (0, 0, 0);
        for t in 0..c {
            for p in 0..c {
                let n = self.count(t, p);
                if t > 0 && p > 0 {
                    inter += n;
                }
                if p > 0 {
                    pred += n;
                }
                if t > 0 {
                    truth += n;
                }
            }
        }
        (inter, pred, truth)
    }

    pub fn class_dice(&self, k: usize) -> Option<f64> {
        let (i, p, t) = self.class_counts(k);
        (p + t > 0).then(|| dice_from_counts(i, p, t))
    }

    pub fn class_iou(&self, k: usize) -> Option<f64> {
        let (i, p, t) = self.class_counts(k);
        (p + t > 0).then(|| iou_from_counts(i, p, t))
    }

    pub fn dice(&self, set: ClassSet) -> f64 {
        match set {
            ClassSet::BinaryForeground => {
                let (i, p, t) = self.foreground_counts();
                dice_from_counts(i, p, t)
            }
            ClassSet::PerClassMean => mean_present((0..self.num_classes).map(|k| self.class_dice(k))),
        }
    }

    pub fn iou(&self, set: ClassSet) -> f64 {
        match set {
            ClassSet::BinaryForeground => {
                let (i, p, t) = self.foreground_counts();
                iou_from_counts(i, p, t)
            }
            ClassSet::PerClassMean => self.mean_iou(),
        }
    }

    /// Mean per-class IoU over classes with a nonempty union.
    pub fn mean_iou(&self) -> f64 {
        mean_present((0..self.num_classes).map(|k| self.class_iou(k)))
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 1.0;
        }
        let hits: u64 = (0..self.num_classes).map(|k| self.count(k, k)).sum();
        hits as f64 / total as f64
    }
}

fn dice_from_counts(inter: u64, pred: u64, truth: u64) -> f64 {
    if pred + truth == 0 {
        1.0
    } else {
        (2 * inter) as f64 / (pred + truth) as f64
    }
}

fn iou_from_counts(inter: u64, pred: u64, truth: u64) -> f64 {
    let union = pred + truth - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn mean_present(scores: impl Iterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = scores.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

pub fn dice_coefficient(pred: &LabelMap, truth: &LabelMap, set: ClassSet, num_classes: usize) -> Result<f64> {
    Ok(Confusion::from_masks(pred, truth, num_classes)?.dice(set))
}

pub fn iou_score(pred: &LabelMap, truth: &LabelMap, set: ClassSet, num_classes: usize) -> Result<f64> {
    Ok(Confusion::from_masks(pred, truth, num_classes)?.iou(set))
}

pub fn mean_iou(pred: &LabelMap, truth: &LabelMap, num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return Err(contract_err!("mean IoU needs at least 2 classes, got {num_classes}"));
    }
    Ok(Confusion::from_masks(pred, truth, num_classes)?.mean_iou())
}

pub fn pixel_accuracy(pred: &LabelMap, truth: &LabelMap) -> Result<f64> {
    if pred.dims != truth.dims {
        return Err(shape_err!("mask dims differ: {:?} vs {:?}", pred.dims, truth.dims));
    }
    let hits = pred.data.iter().zip(&truth.data).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.data.len() as f64)
}

/// Per-pixel argmax over channels; ties go to the lowest class index.
pub fn logits_to_mask<T: Scalar>(logits: &Tensor<T>) -> Result<LabelMap> {
    let &[n, c, h, w] = logits.dims() else {
        return Err(shape_err!("logits_to_mask expects [N,C,H,W], got {:?}", logits.dims()));
    };
    if !(2..=256).contains(&c) {
        return Err(contract_err!("logits_to_mask needs 2..=256 classes, got {c}"));
    }
    let plane = h * w;
    let z = logits.data();
    let mut out = vec![0u8; n * plane];
    for ni in 0..n {
        let base = ni * c * plane;
        for s in 0..plane {
            let mut best = 0;
            let mut best_v = z[base + s];
            for ci in 1..c {
                let v = z[base + ci * plane + s];
                if v > best_v {
                    best = ci;
                    best_v = v;
                }
            }
            out[ni * plane + s] = best as u8;
        }
    }
    LabelMap::new([n, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(labels: &[u8]) -> LabelMap {
        LabelMap::new([1, 1, labels.len()], labels.to_vec()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = mask(&[1, 1, 0, 2, 0, 0]);
        assert_eq!(dice_coefficient(&a, &a, ClassSet::BinaryForeground, 4).unwrap(), 1.0);
        let p = mask(&[1, 1, 0, 0, 0, 0]);
        let t = mask(&[0, 0, 1, 1, 0, 0]);
        assert_eq!(dice_coefficient(&p, &t, ClassSet::BinaryForeground, 2).unwrap(), 0.0);
        let p = mask(&[1, 1, 1, 1, 0, 0, 0, 0]);
        let t = mask(&[0, 0, 1, 1, 1, 1, 0, 0]);
        assert_eq!(dice_coefficient(&p, &t, ClassSet::BinaryForeground, 2).unwrap(), 0.5);
        assert_eq!(iou_score(&p, &t, ClassSet::BinaryForeground, 2).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn both_empty_scores_one() {
        let z = mask(&[0; 5]);
        assert_eq!(dice_coefficient(&z, &z, ClassSet::BinaryForeground, 4).unwrap(), 1.0);
        assert_eq!(iou_score(&z, &z, ClassSet::BinaryForeground, 4).unwrap(), 1.0);
    }

    #[test]
    fn mean_iou_two_classes() {
        let p = mask(&[1, 1, 1, 1, 0, 0, 0, 0]);
        let t = mask(&[0, 0, 1, 1, 1, 1, 0, 0]);
        // class 1: 2/6; class 0: 2/6 as well
        let want = (2.0 / 6.0 + 2.0 / 6.0) / 2.0;
        assert!((mean_iou(&p, &t, 2).unwrap() - want).abs() < 1e-15);
        let ones = mask(&[1; 4]);
        let half = mask(&[1, 1, 1, 1]);
        assert_eq!(mean_iou(&ones, &half, 4).unwrap(), 1.0);
        assert!(matches!(mean_iou(&p, &t, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn single_class_present_reduces_to_its_iou() {
        let p = mask(&[2, 2, 2, 2]);
        let t = mask(&[2, 2, 2, 2]);
        assert_eq!(mean_iou(&p, &t, 4).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        let a = mask(&[0, 1, 1, 0]);
        assert_eq!(pixel_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(pixel_accuracy(&a, &mask(&[1, 0, 0, 1])).unwrap(), 0.0);
        assert_eq!(pixel_accuracy(&a, &mask(&[0, 1, 1, 1])).unwrap(), 0.75);
        assert!(matches!(pixel_accuracy(&a, &mask(&[0, 1])), Err(Error::Shape(_))));
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        let a = mask(&[0, 5]);
        let b = mask(&[0, 1]);
        assert!(matches!(
            dice_coefficient(&a, &b, ClassSet::BinaryForeground, 4),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        let z = Tensor::<f32>::zeros(&[1, 4, 2, 2]).unwrap();
        assert_eq!(logits_to_mask(&z).unwrap().data(), &[0, 0, 0, 0]);
        let mut v = vec![0.0f32; 8];
        v[0] = 1.0; // pixel 0 → class 0
        v[4 + 1] = 1.0; // pixel 1 → class 1
        v[2] = 3.0;
        v[4 + 2] = 3.0; // tie at pixel 2 → class 0
        let z = Tensor::from_vec(&[1, 2, 2, 2], v).unwrap();
        assert_eq!(logits_to_mask(&z).unwrap().data(), &[0, 1, 0, 0]);
    }
}
