//! Static SVG figure of a crack state and its active cells.

use std::fmt::Write;

use microfrac_core::{CellLattice, CrackState, DamageReport, EdgeSet, Mesh, Vec2};

/// Figure width in pixels; the height follows the domain aspect ratio.
const WIDTH: f64 = 600.0;
const MARGIN: f64 = 20.0;
const FOOTER: f64 = 70.0;

struct Frame {
    origin: Vec2,
    height: f64,
    scale: f64,
}

impl Frame {
    fn x(&self, p: Vec2) -> f64 {
        MARGIN + (p.x - self.origin.x) * self.scale
    }

    /// SVG `y` grows downward.
    fn y(&self, p: Vec2) -> f64 {
        MARGIN + (self.origin.y + self.height - p.y) * self.scale
    }
}

fn edges(out: &mut String, frame: &Frame, mesh: &Mesh, set: &EdgeSet, class: &str) {
    for e in set.iter() {
        let [a, b] = mesh.interior_edges[e].nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let _ = writeln!(
            out,
            r#"<line class="{class}" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
            frame.x(pa),
            frame.y(pa),
            frame.x(pb),
            frame.y(pb)
        );
    }
}

/// Draws the cell grid, pre-crack and emergent edges, active cells, a legend
/// and an `(ε, l, M)` caption.
pub fn render_svg(state: &CrackState, report: &DamageReport, mesh: &Mesh, lattice: &CellLattice) -> String {
    let domain = lattice.domain();
    let scale = (WIDTH - 2.0 * MARGIN) / domain.width();
    let frame = Frame { origin: domain.origin(), height: domain.height(), scale };
    let plot_h = domain.height() * scale;
    let total_h = plot_h + 2.0 * MARGIN + FOOTER;
    let eps = lattice.epsilon();
    let side = eps * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total_h:.3}" viewBox="0 0 {WIDTH} {total_h:.3}">"#
    );
    s.push_str(
        "<style>\
         .cell{fill:none;stroke:#c8c8c8;stroke-width:0.5}\
         .active{fill:#e4572e;fill-opacity:0.3;stroke:none}\
         .precrack{stroke:#1f4e9c;stroke-width:2;stroke-linecap:round}\
         .emergent{stroke:#d1121d;stroke-width:2;stroke-linecap:round}\
         .domain{fill:none;stroke:#000;stroke-width:1}\
         text{font-family:sans-serif;font-size:13px}\
         </style>\n",
    );
    let _ = writeln!(
        s,
        r#"<rect class="domain" x="{MARGIN}" y="{MARGIN}" width="{:.3}" height="{plot_h:.3}"/>"#,
        domain.width() * scale
    );

    s.push_str("<g id=\"cells\">\n");
    for c in lattice.cells() {
        let top_left = Vec2::new(c.origin.x, c.origin.y + eps);
        let _ = writeln!(
            s,
            r#"<rect class="cell" x="{:.3}" y="{:.3}" width="{side:.3}" height="{side:.3}"/>"#,
            frame.x(top_left),
            frame.y(top_left)
        );
    }
    s.push_str("</g>\n<g id=\"active\">\n");
    for o in &report.active {
        let top_left = Vec2::new(o.x, o.y + eps);
        let _ = writeln!(
            s,
            r#"<rect class="active" x="{:.3}" y="{:.3}" width="{side:.3}" height="{side:.3}"/>"#,
            frame.x(top_left),
            frame.y(top_left)
        );
    }
    s.push_str("</g>\n<g id=\"precracks\">\n");
    edges(&mut s, &frame, mesh, state.precrack(), "precrack");
    s.push_str("</g>\n<g id=\"emergent\">\n");
    edges(&mut s, &frame, mesh, state.emergent(), "emergent");
    s.push_str("</g>\n");

    let y0 = plot_h + 2.0 * MARGIN;
    let _ = writeln!(s, "<g id=\"legend\">");
    let _ = writeln!(
        s,
        r#"<line class="precrack" x1="{MARGIN}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
        y0 + 5.0,
        MARGIN + 25.0,
        y0 + 5.0
    );
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}">pre-crack</text>"#, MARGIN + 32.0, y0 + 10.0);
    let _ = writeln!(
        s,
        r#"<line class="emergent" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
        MARGIN + 130.0,
        y0 + 5.0,
        MARGIN + 155.0,
        y0 + 5.0
    );
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}">emergent crack</text>"#, MARGIN + 162.0, y0 + 10.0);
    let _ =
        writeln!(s, r#"<rect class="active" x="{:.3}" y="{:.3}" width="20" height="12"/>"#, MARGIN + 290.0, y0 - 1.0);
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}">active cell</text>"#, MARGIN + 317.0, y0 + 10.0);
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text id="caption" x="{MARGIN}" y="{:.3}">ε = {}, l = {}, M(ε,l) = {}</text>"#,
        y0 + 40.0,
        report.epsilon,
        report.l,
        report.m_count
    );
    s.push_str("</svg>\n");
    s
}
