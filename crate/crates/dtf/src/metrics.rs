//! KITTI-style outlier metrics over scene flow components and regions.

use std::fmt;

use crate::error::{Error, Result};
use crate::flow::{SceneFlowField, CH_D0, CH_D1, CH_U, CH_V};
use crate::mask::{derive_occ_mask, MaskKind, PixelMask};
use crate::scalar::Scalar;

/// Absolute outlier threshold in pixels.
pub const OUTLIER_ABS_PX: f64 = 3.0;
/// Relative outlier threshold as a fraction of the ground-truth magnitude.
pub const OUTLIER_REL: f64 = 0.05;

/// Scene flow components: both disparities, optical flow, and their union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SfComponent {
    D1,
    D2,
    Of,
    Sf,
}

impl SfComponent {
    pub const ALL: [SfComponent; 4] = [
        SfComponent::D1,
        SfComponent::D2,
        SfComponent::Of,
        SfComponent::Sf,
    ];
    /// The three primitive components whose union is SF.
    pub const PRIMITIVE: [SfComponent; 3] = [SfComponent::D1, SfComponent::D2, SfComponent::Of];

    fn idx(self) -> usize {
        match self {
            SfComponent::D1 => 0,
            SfComponent::D2 => 1,
            SfComponent::Of => 2,
            SfComponent::Sf => 3,
        }
    }
}

impl fmt::Display for SfComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SfComponent::D1 => "D1",
            SfComponent::D2 => "D2",
            SfComponent::Of => "OF",
            SfComponent::Sf => "SF",
        })
    }
}

/// Evaluation regions: all valid pixels, non-occluded, occluded-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Region {
    All,
    Noc,
    Occ,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::All, Region::Noc, Region::Occ];

    fn idx(self) -> usize {
        match self {
            Region::All => 0,
            Region::Noc => 1,
            Region::Occ => 2,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::All => "all",
            Region::Noc => "noc",
            Region::Occ => "occ",
        })
    }
}

/// Outlier and pixel counts for one component/region cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionTally {
    pub outliers: u64,
    pub valid: u64,
}

impl RegionTally {
    /// Outlier fraction in percent.
    pub fn rate(&self) -> f64 {
        debug_assert!(self.valid > 0);
        100.0 * self.outliers as f64 / self.valid as f64
    }
}

/// Outlier rates per component and region.
///
/// Cells of empty regions are absent rather than zero so that aggregation
/// and reporting never mistake "no pixels" for "no outliers".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    cells: [[Option<RegionTally>; 3]; 4],
}

impl EvalReport {
    pub fn tally(&self, component: SfComponent, region: Region) -> Option<RegionTally> {
        self.cells[component.idx()][region.idx()]
    }

    /// Rate in percent, absent when the region holds no valid pixels.
    pub fn rate(&self, component: SfComponent, region: Region) -> Option<f64> {
        self.tally(component, region).map(|t| t.rate())
    }

    pub fn set_tally(&mut self, component: SfComponent, region: Region, tally: RegionTally) {
        self.cells[component.idx()][region.idx()] = Some(tally);
    }

    /// Flat key-value text record, one `component.region = rate` line per
    /// cell plus the pixel counts that weighting needs.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# dtf eval report v1\n");
        for comp in SfComponent::ALL {
            for region in Region::ALL {
                if let Some(t) = self.tally(comp, region) {
                    out.push_str(&format!("{comp}.{region} = {:.6}\n", t.rate()));
                    out.push_str(&format!("{comp}.{region}.outliers = {}\n", t.outliers));
                    out.push_str(&format!("{comp}.{region}.pixels = {}\n", t.valid));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<EvalReport> {
        let mut report = EvalReport::default();
        let parse_err = |line: &str| Error::Manifest {
            path: Default::default(),
            reason: format!("bad eval report line: {line}"),
        };
        let mut counts: std::collections::BTreeMap<(usize, usize), (Option<u64>, Option<u64>)> =
            Default::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| parse_err(line))?;
            let key = key.trim();
            let value = value.trim();
            let parts: Vec<&str> = key.split('.').collect();
            if parts.len() < 2 {
                return Err(parse_err(line));
            }
            let comp = match parts[0] {
                "D1" => SfComponent::D1,
                "D2" => SfComponent::D2,
                "OF" => SfComponent::Of,
                "SF" => SfComponent::Sf,
                _ => return Err(parse_err(line)),
            };
            let region = match parts[1] {
                "all" => Region::All,
                "noc" => Region::Noc,
                "occ" => Region::Occ,
                _ => return Err(parse_err(line)),
            };
            let slot = counts.entry((comp.idx(), region.idx())).or_default();
            match parts.get(2) {
                None => {} // the rate line is derived from the counts
                Some(&"outliers") => {
                    slot.0 = Some(value.parse().map_err(|_| parse_err(line))?)
                }
                Some(&"pixels") => slot.1 = Some(value.parse().map_err(|_| parse_err(line))?),
                Some(_) => return Err(parse_err(line)),
            }
        }
        for ((c, r), (outliers, valid)) in counts {
            if let (Some(outliers), Some(valid)) = (outliers, valid) {
                report.cells[c][r] = Some(RegionTally { outliers, valid });
            }
        }
        Ok(report)
    }
}

/// Error and ground-truth magnitude of one component at one pixel.
///
/// Non-finite estimates yield an infinite error so they always count as
/// outliers.
pub(crate) fn component_error<S: Scalar>(est: &[S], gt: &[S], component: SfComponent) -> (f64, f64) {
    match component {
        SfComponent::D1 => {
            let e = est[CH_D0].as_f64();
            let g = gt[CH_D0].as_f64();
            let err = if e.is_finite() { (e - g).abs() } else { f64::INFINITY };
            (err, g.abs())
        }
        SfComponent::D2 => {
            let e = est[CH_D1].as_f64();
            let g = gt[CH_D1].as_f64();
            let err = if e.is_finite() { (e - g).abs() } else { f64::INFINITY };
            (err, g.abs())
        }
        SfComponent::Of => {
            let (eu, ev) = (est[CH_U].as_f64(), est[CH_V].as_f64());
            let (gu, gv) = (gt[CH_U].as_f64(), gt[CH_V].as_f64());
            let err = if eu.is_finite() && ev.is_finite() {
                ((eu - gu).powi(2) + (ev - gv).powi(2)).sqrt()
            } else {
                f64::INFINITY
            };
            (err, (gu * gu + gv * gv).sqrt())
        }
        SfComponent::Sf => unreachable!("SF has no scalar error"),
    }
}

/// KITTI outlier rule: more than 3 px away AND more than 5 % of the
/// ground-truth magnitude.
#[inline]
pub(crate) fn is_outlier(err: f64, magnitude: f64) -> bool {
    err > OUTLIER_ABS_PX && err > OUTLIER_REL * magnitude
}

fn check_shapes<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    context: &'static str,
) -> Result<()> {
    if !est.same_shape(gt) {
        return Err(Error::ShapeMismatch {
            context,
            expected: gt.grid().shape(),
            got: est.grid().shape(),
        });
    }
    if valid.height() != gt.height() || valid.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            context,
            expected: (gt.height(), gt.width(), 1),
            got: (valid.height(), valid.width(), 1),
        });
    }
    Ok(())
}

/// Per-pixel outlier map of one primitive component, evaluated on valid
/// pixels only (invalid pixels are never outliers).
pub fn component_outlier_map<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    component: SfComponent,
) -> Result<PixelMask> {
    if component == SfComponent::Sf {
        return Err(Error::UnsupportedComponent(component));
    }
    check_shapes(est, gt, valid, "component_outlier_map")?;
    let (h, w) = (gt.height(), gt.width());
    let mut map = PixelMask::filled(h, w, MaskKind::Valid, false);
    for i in 0..h {
        for j in 0..w {
            if !valid.get(i, j) {
                continue;
            }
            let (err, mag) = component_error(est.pixel(i, j), gt.pixel(i, j), component);
            map.set(i, j, is_outlier(err, mag));
        }
    }
    Ok(map)
}

/// SF outlier map: a pixel is an SF outlier when any of D1, D2, OF is.
pub fn sf_outlier_map<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
) -> Result<PixelMask> {
    let d1 = component_outlier_map(est, gt, valid, SfComponent::D1)?;
    let d2 = component_outlier_map(est, gt, valid, SfComponent::D2)?;
    let of = component_outlier_map(est, gt, valid, SfComponent::Of)?;
    let (h, w) = (gt.height(), gt.width());
    let mut map = PixelMask::filled(h, w, MaskKind::Valid, false);
    for i in 0..h {
        for j in 0..w {
            map.set(i, j, d1.get(i, j) || d2.get(i, j) || of.get(i, j));
        }
    }
    Ok(map)
}

/// Full evaluation over all components and regions.
pub fn evaluate<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    noc: &PixelMask,
) -> Result<EvalReport> {
    check_shapes(est, gt, valid, "evaluate")?;
    let occ = derive_occ_mask(valid, noc)?;
    let noc_valid = valid.and(noc)?;

    let maps = [
        component_outlier_map(est, gt, valid, SfComponent::D1)?,
        component_outlier_map(est, gt, valid, SfComponent::D2)?,
        component_outlier_map(est, gt, valid, SfComponent::Of)?,
    ];

    let mut report = EvalReport::default();
    let (h, w) = (gt.height(), gt.width());
    for (region, region_mask) in [
        (Region::All, valid),
        (Region::Noc, &noc_valid),
        (Region::Occ, &occ),
    ] {
        let mut valid_px = 0u64;
        let mut outliers = [0u64; 4];
        for i in 0..h {
            for j in 0..w {
                if !region_mask.get(i, j) {
                    continue;
                }
                valid_px += 1;
                let mut any = false;
                for (k, map) in maps.iter().enumerate() {
                    if map.get(i, j) {
                        outliers[k] += 1;
                        any = true;
                    }
                }
                if any {
                    outliers[3] += 1;
                }
            }
        }
        if valid_px == 0 {
            continue; // empty region stays absent
        }
        for (k, comp) in SfComponent::ALL.into_iter().enumerate() {
            report.set_tally(
                comp,
                region,
                RegionTally {
                    outliers: outliers[k],
                    valid: valid_px,
                },
            );
        }
    }
    Ok(report)
}

/// Pixel-weighted aggregation: outlier and pixel counts are summed per cell,
/// so the aggregate rate is the mean over all valid ground-truth pixels.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::NoValidPixels {
            context: "aggregate: empty report list",
        });
    }
    let mut out = EvalReport::default();
    for comp in SfComponent::ALL {
        for region in Region::ALL {
            let mut outliers = 0u64;
            let mut valid = 0u64;
            for r in reports {
                if let Some(t) = r.tally(comp, region) {
                    outliers += t.outliers;
                    valid += t.valid;
                }
            }
            if valid > 0 {
                out.set_tally(comp, region, RegionTally { outliers, valid });
            }
        }
    }
    Ok(out)
}

/// Fraction of valid pixels that are non-occluded, used to reconstruct
/// occluded-only rates from all/noc pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NocRatio(f64);

impl NocRatio {
    /// The KITTI training-set ratio.
    pub const KITTI: NocRatio = NocRatio(0.843);

    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!(
                "noc ratio must lie strictly inside (0, 1), got {ratio}"
            )));
        }
        Ok(NocRatio(ratio))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for NocRatio {
    fn default() -> Self {
        NocRatio::KITTI
    }
}

/// Reconstructs the occluded-only rate from all and noc rates:
/// `(all - noc * ratio) / (1 - ratio)`.
///
/// Negative results are returned as-is; they indicate inconsistent inputs
/// and are the caller's job to flag.
pub fn reconstruct_occ_rate(all_rate: f64, noc_rate: f64, ratio: NocRatio) -> f64 {
    (all_rate - noc_rate * ratio.value()) / (1.0 - ratio.value())
}

/// Measures the non-occluded fraction over a set of (valid, noc) mask pairs.
pub fn measure_noc_ratio(masks: &[(PixelMask, PixelMask)]) -> Result<NocRatio> {
    if masks.is_empty() {
        return Err(Error::NoValidPixels {
            context: "measure_noc_ratio: empty mask list",
        });
    }
    let mut noc_px = 0u64;
    let mut valid_px = 0u64;
    for (valid, noc) in masks {
        valid_px += valid.count_true() as u64;
        noc_px += valid.and(noc)?.count_true() as u64;
    }
    if valid_px == 0 {
        return Err(Error::NoValidPixels {
            context: "measure_noc_ratio: zero valid pixels",
        });
    }
    NocRatio::new(noc_px as f64 / valid_px as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowDirection;
    use crate::grid::Grid2D;

    fn field(h: usize, w: usize, px: &[[f64; 4]]) -> SceneFlowField<f64> {
        let mut grid = Grid2D::new(h, w, 4);
        for (p, vals) in px.iter().enumerate() {
            let (i, j) = (p / w, p % w);
            grid.pixel_mut(i, j).copy_from_slice(vals);
        }
        SceneFlowField::new(grid, FlowDirection::Forward).unwrap()
    }

    fn all_valid(h: usize, w: usize) -> PixelMask {
        PixelMask::filled(h, w, MaskKind::Valid, true)
    }

    #[test]
    fn outlier_thresholds() {
        let gt = field(1, 3, &[[10.0, 0.0, 10.0, 10.0]; 3]);
        // err 2 <= 3 px: inlier
        let est_abs = field(1, 3, &[[12.0, 0.0, 10.0, 10.0]; 3]);
        let map = component_outlier_map(&est_abs, &gt, &all_valid(1, 3), SfComponent::Of).unwrap();
        assert_eq!(map.count_true(), 0);

        // err 4 > 3 but 4 % of |gt| = 100: inlier
        let gt_big = field(1, 1, &[[100.0, 0.0, 10.0, 10.0]]);
        let est_rel = field(1, 1, &[[104.0, 0.0, 10.0, 10.0]]);
        let map =
            component_outlier_map(&est_rel, &gt_big, &all_valid(1, 1), SfComponent::Of).unwrap();
        assert_eq!(map.count_true(), 0);

        // d0: err 5 > 3 and 50 % > 5 %: outlier
        let est_d0 = field(1, 3, &[[10.0, 0.0, 15.0, 10.0]; 3]);
        let map = component_outlier_map(&est_d0, &gt, &all_valid(1, 3), SfComponent::D1).unwrap();
        assert_eq!(map.count_true(), 3);
    }

    #[test]
    fn sf_is_union_of_components() {
        let gt = field(1, 1, &[[100.0, 0.0, 10.0, 10.0]]);
        let est = field(1, 1, &[[100.0, 0.0, 15.0, 10.0]]);
        let sf = sf_outlier_map(&est, &gt, &all_valid(1, 1)).unwrap();
        assert!(sf.get(0, 0));
    }

    #[test]
    fn sf_component_rejected() {
        let gt = field(1, 1, &[[0.0; 4]]);
        assert!(matches!(
            component_outlier_map(&gt, &gt, &all_valid(1, 1), SfComponent::Sf),
            Err(Error::UnsupportedComponent(_))
        ));
    }

    #[test]
    fn evaluate_identity_is_zero() {
        let gt = field(2, 2, &[[1.0, 2.0, 3.0, 4.0]; 4]);
        let noc = PixelMask::filled(2, 2, MaskKind::Noc, true);
        let report = evaluate(&gt, &gt, &all_valid(2, 2), &noc).unwrap();
        for comp in SfComponent::ALL {
            assert_eq!(report.rate(comp, Region::All), Some(0.0));
        }
        // noc covers everything, so the occ region is absent
        assert_eq!(report.rate(SfComponent::Sf, Region::Occ), None);
    }

    #[test]
    fn evaluate_two_pixel_hand_count() {
        // 2x1 grid, one pixel is an OF outlier only:
        // OF = SF = 50 %, D1 = D2 = 0 % over `all`.
        let gt = field(2, 1, &[[0.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 10.0]]);
        let est = field(2, 1, &[[10.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 10.0]]);
        let noc = PixelMask::filled(2, 1, MaskKind::Noc, true);
        let report = evaluate(&est, &gt, &all_valid(2, 1), &noc).unwrap();
        assert_eq!(report.rate(SfComponent::Of, Region::All), Some(50.0));
        assert_eq!(report.rate(SfComponent::Sf, Region::All), Some(50.0));
        assert_eq!(report.rate(SfComponent::D1, Region::All), Some(0.0));
        assert_eq!(report.rate(SfComponent::D2, Region::All), Some(0.0));

        // noc covering only the inlier pixel: noc rates 0, occ rates 100.
        let noc = PixelMask::from_vec(2, 1, MaskKind::Noc, vec![false, true]).unwrap();
        let report = evaluate(&est, &gt, &all_valid(2, 1), &noc).unwrap();
        assert_eq!(report.rate(SfComponent::Sf, Region::Noc), Some(0.0));
        assert_eq!(report.rate(SfComponent::Sf, Region::Occ), Some(100.0));
        assert_eq!(report.rate(SfComponent::Of, Region::Occ), Some(100.0));
    }

    #[test]
    fn aggregate_is_pixel_weighted() {
        let mut a = EvalReport::default();
        a.set_tally(
            SfComponent::Sf,
            Region::All,
            RegionTally {
                outliers: 0,
                valid: 1,
            },
        );
        let mut b = EvalReport::default();
        b.set_tally(
            SfComponent::Sf,
            Region::All,
            RegionTally {
                outliers: 3,
                valid: 3,
            },
        );
        let agg = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(agg.rate(SfComponent::Sf, Region::All), Some(75.0));

        let single = aggregate(&[a.clone()]).unwrap();
        assert_eq!(single, a);

        let same = aggregate(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.rate(SfComponent::Sf, Region::All), a.rate(SfComponent::Sf, Region::All));
    }

    #[test]
    fn occ_reconstruction_matches_published_rows() {
        let r = NocRatio::default();
        assert!((reconstruct_occ_rate(8.21, 6.69, r) - 16.37).abs() < 0.01);
        assert!((reconstruct_occ_rate(15.69, 10.86, r) - 41.62).abs() < 0.01);
        assert!((reconstruct_occ_rate(10.0, 10.0, r) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn occ_reconstruction_inverts_composition() {
        let r = NocRatio::new(0.7).unwrap();
        let (noc, occ) = (4.0, 30.0);
        let all = noc * r.value() + occ * (1.0 - r.value());
        assert!((reconstruct_occ_rate(all, noc, r) - occ).abs() < 1e-9);
    }

    #[test]
    fn measure_noc_ratio_cases() {
        let valid = all_valid(10, 100);
        let all_noc = PixelMask::filled(10, 100, MaskKind::Noc, true);
        // ratio 1.0 is out of bounds and rejected
        assert!(measure_noc_ratio(&[(valid.clone(), all_noc)]).is_err());

        let mut half = PixelMask::filled(10, 100, MaskKind::Noc, false);
        for i in 0..5 {
            for j in 0..100 {
                half.set(i, j, true);
            }
        }
        let r = measure_noc_ratio(&[(valid.clone(), half)]).unwrap();
        assert!((r.value() - 0.5).abs() < 1e-12);

        let mut m843 = PixelMask::filled(10, 100, MaskKind::Noc, false);
        for p in 0..843 {
            m843.set(p / 100, p % 100, true);
        }
        let r = measure_noc_ratio(&[(valid, m843)]).unwrap();
        assert!((r.value() - 0.843).abs() < 1e-12);
    }

    #[test]
    fn report_text_roundtrip() {
        let gt = field(2, 1, &[[0.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 10.0]]);
        let est = field(2, 1, &[[10.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 10.0]]);
        let noc = PixelMask::filled(2, 1, MaskKind::Noc, true);
        let report = evaluate(&est, &gt, &all_valid(2, 1), &noc).unwrap();
        let parsed = EvalReport::from_text(&report.to_text()).unwrap();
        assert_eq!(parsed, report);
    }
}
