//! 2-D scatter plots of reduced features with covariance ellipses, as SVG.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::commands::{resolve_labels, ModelDir};
use super::RunConfig;
use crate::error::{OodError, Result};
use crate::gaussian::{write_json, DistanceModel, Ellipse, FittedGaussian};
use crate::tensor_io::{load_manifest, read_labels, Label, Split};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 60.0;
const TAG_PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub sample_id: String,
    pub xy: [f64; 2],
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Circle,
    Triangle,
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub color: String,
    pub marker: Marker,
    /// Color points by their tag instead of `color`.
    pub color_by_tag: bool,
    pub points: Vec<PlotPoint>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Axis-aligned half extents of an ellipse.
fn half_extent(e: &Ellipse) -> [f64; 2] {
    let (s, c) = e.angle.sin_cos();
    let [a, b] = e.semi_axes;
    [
        ((a * c).powi(2) + (b * s).powi(2)).sqrt(),
        ((a * s).powi(2) + (b * c).powi(2)).sqrt(),
    ]
}

/// Data-to-pixel map with one scale for both axes.
struct Frame {
    min: [f64; 2],
    scale: f64,
    offset: [f64; 2],
}

impl Frame {
    fn fit(series: &[PlotSeries], ellipses: &[Ellipse]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut include = |p: [f64; 2]| {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        };
        for p in series.iter().flat_map(|s| &s.points) {
            include(p.xy);
        }
        for e in ellipses {
            let h = half_extent(e);
            include([e.center[0] - h[0], e.center[1] - h[1]]);
            include([e.center[0] + h[0], e.center[1] + h[1]]);
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = [(hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12)];
        let pad = [0.05 * span[0], 0.05 * span[1]];
        let min = [lo[0] - pad[0], lo[1] - pad[1]];
        let span = [span[0] + 2.0 * pad[0], span[1] + 2.0 * pad[1]];
        let avail = [WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN];
        let scale = (avail[0] / span[0]).min(avail[1] / span[1]);
        let offset = [
            MARGIN + 0.5 * (avail[0] - span[0] * scale),
            MARGIN + 0.5 * (avail[1] - span[1] * scale),
        ];
        Self { min, scale, offset }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (
            self.offset[0] + (p[0] - self.min[0]) * self.scale,
            HEIGHT - self.offset[1] - (p[1] - self.min[1]) * self.scale,
        )
    }

    fn data_at(&self, px: f64, py: f64) -> [f64; 2] {
        [
            self.min[0] + (px - self.offset[0]) / self.scale,
            self.min[1] + (HEIGHT - self.offset[1] - py) / self.scale,
        ]
    }
}

fn marker_svg(out: &mut String, marker: Marker, x: f64, y: f64, color: &str, id: &str) {
    let id = escape(id);
    match marker {
        Marker::Circle => {
            let _ = writeln!(
                out,
                r#"    <circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.7" data-id="{id}"/>"#
            );
        }
        Marker::Triangle => {
            let _ = writeln!(
                out,
                r#"    <polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}" fill-opacity="0.8" data-id="{id}"/>"#,
                x,
                y - 4.0,
                x - 3.5,
                y + 2.5,
                x + 3.5,
                y + 2.5
            );
        }
        Marker::Cross => {
            let _ = writeln!(
                out,
                r#"    <path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="1.5" data-id="{id}"/>"#,
                x - 3.0,
                y - 3.0,
                x + 3.0,
                y + 3.0,
                x - 3.0,
                y + 3.0,
                x + 3.0,
                y - 3.0
            );
        }
    }
}

/// Render the series and ellipses. Ellipses carry their data-space geometry
/// in `data-*` attributes.
pub fn render_svg(series: &[PlotSeries], ellipses: &[Ellipse], title: &str, timestamp: Option<u64>) -> String {
    let frame = Frame::fit(series, ellipses);
    let mut tag_colors: BTreeMap<&str, &str> = BTreeMap::new();
    for s in series.iter().filter(|s| s.color_by_tag) {
        for t in s.points.iter().filter_map(|p| p.tag.as_deref()) {
            let next = TAG_PALETTE[tag_colors.len() % TAG_PALETTE.len()];
            tag_colors.entry(t).or_insert(next);
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    if let Some(t) = timestamp {
        let _ = writeln!(out, "  <!-- generated at unix time {t} -->");
    }
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"  <text x="{:.1}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // frame and corner tick labels
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let (x1, y1) = (WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r##"  <rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y0 - y1
    );
    let lo = frame.data_at(x0, y0);
    let hi = frame.data_at(x1, y1);
    for (x, y, anchor, text) in [
        (x0, y0 + 18.0, "start", format!("{:.3}", lo[0])),
        (x1, y0 + 18.0, "end", format!("{:.3}", hi[0])),
        (x0 - 6.0, y0, "end", format!("{:.3}", lo[1])),
        (x0 - 6.0, y1 + 10.0, "end", format!("{:.3}", hi[1])),
        (WIDTH / 2.0, HEIGHT - 20.0, "middle", "comp1".to_string()),
    ] {
        let _ = writeln!(
            out,
            r#"  <text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{text}</text>"#
        );
    }
    let _ = writeln!(
        out,
        r#"  <text x="18" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11" transform="rotate(-90 18 {:.1})">comp2</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for s in series {
        let _ = writeln!(out, r#"  <g class="series" data-name="{}">"#, escape(&s.name));
        for p in &s.points {
            let (x, y) = frame.px(p.xy);
            let color = match (&p.tag, s.color_by_tag) {
                (Some(t), true) => tag_colors[t.as_str()],
                _ => s.color.as_str(),
            };
            marker_svg(&mut out, s.marker, x, y, color, &p.sample_id);
        }
        let _ = writeln!(out, "  </g>");
    }

    let _ = writeln!(out, r#"  <g class="ellipses">"#);
    for e in ellipses {
        let (cx, cy) = frame.px(e.center);
        let dash = if e.n_std > 1.0 { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r##"    <ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.4} {cx:.2} {cy:.2})" fill="none" stroke="#111" stroke-width="1.5"{dash} data-n-std="{}" data-center-x="{}" data-center-y="{}" data-semi-major="{}" data-semi-minor="{}" data-angle="{}"/>"##,
            e.semi_axes[0] * frame.scale,
            e.semi_axes[1] * frame.scale,
            -e.angle.to_degrees(),
            e.n_std,
            e.center[0],
            e.center[1],
            e.semi_axes[0],
            e.semi_axes[1],
            e.angle
        );
    }
    let _ = writeln!(out, "  </g>");

    // legend
    let mut entries: Vec<(String, String, Marker)> = Vec::new();
    for s in series {
        if s.color_by_tag && !tag_colors.is_empty() {
            for (t, c) in &tag_colors {
                entries.push((format!("{} ({t})", s.name), c.to_string(), s.marker));
            }
        } else {
            entries.push((s.name.clone(), s.color.clone(), s.marker));
        }
    }
    let _ = writeln!(out, r#"  <g class="legend">"#);
    for (i, (name, color, marker)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 150.0;
        marker_svg(&mut out, *marker, x, y - 4.0, color, "");
        let _ = writeln!(
            out,
            r#"    <text x="{:.1}" y="{y:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 10.0,
            escape(name)
        );
    }
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InsideCount {
    pub inside: usize,
    pub outside: usize,
}

pub fn plot_command(model_dir: &Path, cfg: &RunConfig, out: Option<&Path>, timestamp: bool) -> Result<()> {
    let model = ModelDir::load(model_dir)?;
    let dim = model.reducer.output_dim()?;
    if dim != 2 {
        return Err(OodError::Config(format!(
            "plotting needs 2-D features but the model has {dim}; fit with --reducer pca:2 or tsne"
        )));
    }
    let FittedGaussian::Cholesky(gaussian) = &model.gaussian else {
        return Err(OodError::Config("plotting needs a regularized (Cholesky) model".into()));
    };
    let manifest_path = cfg.manifest.clone().unwrap_or(model.report.manifest.clone());
    let (ids, splits, features) = model.features(Some(&manifest_path), |_| true)?;
    let tags: HashMap<String, Option<String>> = load_manifest(&manifest_path)?
        .entries
        .into_iter()
        .map(|e| (e.sample_id, e.tag))
        .collect();
    let labels = match &cfg.labels {
        Some(p) => resolve_labels(&read_labels(p)?, cfg.dsc_threshold),
        None => HashMap::new(),
    };

    let mut series = vec![
        PlotSeries {
            name: "train".into(),
            color: "#9e9e9e".into(),
            marker: Marker::Circle,
            color_by_tag: true,
            points: Vec::new(),
        },
        PlotSeries {
            name: "test ID".into(),
            color: "#1f77b4".into(),
            marker: Marker::Triangle,
            color_by_tag: false,
            points: Vec::new(),
        },
        PlotSeries {
            name: "test OOD".into(),
            color: "#d62728".into(),
            marker: Marker::Cross,
            color_by_tag: false,
            points: Vec::new(),
        },
    ];
    let mut counts = [InsideCount::default(); 3];
    let mut rows = Vec::with_capacity(ids.len());
    let distances = gaussian.mahalanobis_batch(features.view())?;
    for (i, (id, split)) in ids.iter().zip(&splits).enumerate() {
        let label = match split {
            Split::Train => None,
            Split::Test => Some(*labels.get(id).ok_or_else(|| OodError::MissingLabel(id.clone()))?),
        };
        let k = match label {
            None => 0,
            Some(Label::Id) => 1,
            Some(Label::Ood) => 2,
        };
        let xy = [features[[i, 0]], features[[i, 1]]];
        series[k].points.push(PlotPoint {
            sample_id: id.clone(),
            xy,
            tag: tags.get(id).cloned().flatten(),
        });
        if distances[i] <= 1.0 {
            counts[k].inside += 1;
        } else {
            counts[k].outside += 1;
        }
        rows.push((id, xy, split, label));
    }
    let ellipses = [gaussian.covariance_ellipse(1.0)?, gaussian.covariance_ellipse(2.0)?];
    let stamp = timestamp.then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
    let svg = render_svg(&series, &ellipses, &model.report.reducer, stamp);

    let out = out.unwrap_or(model_dir);
    fs::create_dir_all(out).map_err(|e| OodError::io(out, e))?;
    let svg_path = out.join("plot.svg");
    fs::write(&svg_path, svg).map_err(|e| OodError::io(&svg_path, e))?;

    let points_path = out.join("plot_points.csv");
    let csv_err = |e: csv::Error| OodError::Csv {
        path: points_path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&points_path).map_err(csv_err)?;
    w.write_record(["sample_id", "comp1", "comp2", "split", "label"]).map_err(csv_err)?;
    for (id, xy, split, label) in &rows {
        let label = label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([id.as_str(), &xy[0].to_string(), &xy[1].to_string(), &split.to_string(), &label])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| OodError::io(&points_path, e))?;

    let ellipse_path = out.join("ellipses.csv");
    let mut w = csv::Writer::from_path(&ellipse_path).map_err(csv_err)?;
    w.write_record(["n_std", "center_x", "center_y", "semi_major", "semi_minor", "angle"])
        .map_err(csv_err)?;
    for e in &ellipses {
        w.write_record(
            [e.n_std, e.center[0], e.center[1], e.semi_axes[0], e.semi_axes[1], e.angle].map(|v| v.to_string()),
        )
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| OodError::io(&ellipse_path, e))?;

    #[derive(Serialize)]
    struct Summary {
        inside_one_sd: BTreeMap<&'static str, InsideCount>,
        ellipses: [Ellipse; 2],
    }
    let summary = Summary {
        inside_one_sd: [("train", counts[0]), ("test_id", counts[1]), ("test_ood", counts[2])].into(),
        ellipses,
    };
    write_json(&out.join("plot_summary.json"), &summary)?;
    for (name, c) in ["train", "test ID", "test OOD"].iter().zip(counts) {
        println!("{name}: {} inside / {} outside the 1-SD ellipse", c.inside, c.outside);
    }
    println!("wrote {}", svg_path.display());
    Ok(())
}
