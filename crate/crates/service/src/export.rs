//! Standalone HTML rendering of a result document.

use std::fmt::Write;

use html_escape::{encode_double_quoted_attribute as attr, encode_text as text};
use vst_core::orchestrator::LoopStatus;
use vst_core::prompts::format_pct;
use vst_core::{StutterLabel, TherapyPlan};

use crate::results::ResultDocument;

pub const DRAFT_WATERMARK: &str = "DRAFT — NOT APPROVED";

fn color(label: StutterLabel) -> &'static str {
    match label {
        StutterLabel::Prolongation => "#e4572e",
        StutterLabel::Block => "#7b2cbf",
        StutterLabel::SoundRepetition => "#f3a712",
        StutterLabel::WordRepetition => "#29335c",
        StutterLabel::Interjection => "#0e9594",
        StutterLabel::Fluent => "#9bc53d",
    }
}

const STYLE: &str = "\
body{font-family:system-ui,sans-serif;max-width:960px;margin:2rem auto;padding:0 1rem;color:#222}
h1{font-size:1.5rem}h2{border-bottom:1px solid #ccc;padding-bottom:.2rem;margin-top:2rem}
table{border-collapse:collapse;width:100%;margin:.5rem 0}
th,td{border:1px solid #ddd;padding:.3rem .5rem;text-align:left;vertical-align:top}
th{background:#f4f4f4}
.watermark{position:fixed;top:40%;left:0;right:0;text-align:center;font-size:4rem;font-weight:700;
color:rgba(200,0,0,.15);transform:rotate(-20deg);pointer-events:none;z-index:10}
.banner{border:2px solid #c00;background:#fee;padding:.6rem;font-weight:600}
.donut{width:160px;height:160px;border-radius:50%;display:inline-block;margin-right:1rem}
.donut::after{content:'';display:block;width:50%;height:50%;margin:25%;border-radius:50%;background:#fff}
.grid{display:flex;flex-wrap:wrap;gap:3px}
.cell{width:28px;height:28px;display:block;border:1px solid #999}
.swatch{display:inline-block;width:.8rem;height:.8rem;margin-right:.3rem}
details{margin:.4rem 0}pre{white-space:pre-wrap;background:#f8f8f8;padding:.5rem;font-size:.85rem}
";

pub fn render(doc: &ResultDocument) -> String {
    let mut h = String::new();
    let title = format!("Therapy planning report {}", doc.session_id);
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>\n{STYLE}</style>\n</head>\n<body>\n",
        text(&title)
    );
    if !doc.is_approved() {
        let _ = writeln!(h, "<div class=\"watermark\">{DRAFT_WATERMARK}</div>");
    }
    let _ = writeln!(h, "<h1>{}</h1>", text(&title));
    let _ = writeln!(
        h,
        "<p>Status: <strong>{}</strong> · Created {}</p>",
        doc.lifecycle.as_str(),
        doc.created_at.to_rfc3339()
    );
    if doc.red_flag {
        let _ = writeln!(
            h,
            "<p class=\"banner\">URGENT CLINICAL NOTE: the plan flags concerns that need immediate clinician assessment.</p>"
        );
    }
    summary(&mut h, doc);
    classification(&mut h, doc);
    heatmap(&mut h, doc);
    if let Some(plan) = &doc.plan {
        recommendations(&mut h, plan);
    }
    critic(&mut h, doc);
    history(&mut h, doc);
    audit(&mut h, doc);
    h.push_str("</body>\n</html>\n");
    h
}

fn summary(h: &mut String, doc: &ResultDocument) {
    let s = &doc.analysis_summary;
    let _ = writeln!(h, "<section id=\"analysis-summary\">\n<h2>Analysis Summary</h2>");
    let _ = writeln!(
        h,
        "<table><tr><th>Duration</th><td>{:.2} s</td></tr><tr><th>Sample rate</th><td>{} Hz</td></tr>\
<tr><th>Chunks</th><td>{}</td></tr><tr><th>Window</th><td>{} s, {}% overlap</td></tr></table>",
        s.duration_s,
        s.sample_rate_hz,
        s.chunk_count,
        s.segmentation.duration_s(),
        s.segmentation.overlap_pct()
    );
    let mut stops = Vec::new();
    let mut acc = 0.0;
    for share in s.type_distribution.iter().filter(|t| t.count > 0) {
        let next = acc + share.fraction * 100.0;
        stops.push(format!("{} {acc:.2}% {next:.2}%", color(share.label)));
        acc = next;
    }
    if !stops.is_empty() {
        let _ = writeln!(h, "<div class=\"donut\" style=\"background:conic-gradient({})\"></div>", stops.join(","));
    }
    let _ = writeln!(h, "<table class=\"distribution\"><tr><th>Type</th><th>Chunks</th><th>Share</th></tr>");
    for share in &s.type_distribution {
        let _ = writeln!(
            h,
            "<tr><td><span class=\"swatch\" style=\"background:{}\"></span>{}</td><td>{}</td><td>{:.1}%</td></tr>",
            color(share.label),
            share.label.display_name(),
            share.count,
            share.fraction * 100.0
        );
    }
    h.push_str("</table>\n</section>\n");
}

fn classification(h: &mut String, doc: &ResultDocument) {
    let _ = writeln!(h, "<section id=\"overall-classification\">\n<h2>Overall Classification</h2>");
    match &doc.overall_classification {
        None => h.push_str("<p>Not available.</p>\n"),
        Some(c) => {
            let secondary = c.secondary_type.map_or("None", |l| l.display_name());
            let _ = writeln!(
                h,
                "<table><tr><th>Primary type</th><td>{}</td></tr><tr><th>Secondary type</th><td>{}</td></tr>\
<tr><th>Weighted confidence</th><td>{:.2}</td></tr><tr><th>Severity</th><td>{}</td></tr>\
<tr><th>Stuttering percentage</th><td>{}% of chunks</td></tr></table>",
                c.primary_type.display_name(),
                secondary,
                c.weighted_confidence,
                c.severity.as_str(),
                format_pct(c.stuttering_pct)
            );
            if !c.problematic_phonemes.is_empty() {
                let list: Vec<String> = c
                    .problematic_phonemes
                    .iter()
                    .map(|p| format!("/{}/ ({:.2}x)", text(&p.phoneme), p.ratio))
                    .collect();
                let _ = writeln!(h, "<p>Problematic phonemes: {}</p>", list.join(", "));
            }
        }
    }
    h.push_str("</section>\n");
}

fn heatmap(h: &mut String, doc: &ResultDocument) {
    let _ = writeln!(h, "<section id=\"chunk-heatmap\">\n<h2>Chunk Heatmap</h2>\n<div class=\"grid\">");
    for c in &doc.chunks {
        let tip = format!(
            "Chunk {} [{:.2}s-{:.2}s] {} ({:.2}) phonemes: {} transcript: {}",
            c.index,
            c.start_s,
            c.end_s,
            c.label.display_name(),
            c.confidence,
            c.phonemes.as_ref().map_or("N/A".to_owned(), |p| p.join(" ")),
            c.transcript.as_deref().unwrap_or("N/A")
        );
        let _ = writeln!(
            h,
            "<a class=\"cell\" href=\"{}\" title=\"{}\" style=\"background:{};opacity:{:.2}\"></a>",
            attr(&c.audio_url),
            attr(&tip),
            color(c.label),
            c.confidence.clamp(0.15, 1.0)
        );
    }
    h.push_str("</div>\n<table class=\"chunks\"><tr><th>#</th><th>Time</th><th>Type</th><th>Confidence</th><th>Transcript</th><th>Phonemes</th></tr>\n");
    for c in &doc.chunks {
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{:.2}–{:.2} s</td><td>{}</td><td>{:.2}</td><td>{}</td><td>{}</td></tr>",
            c.index,
            c.start_s,
            c.end_s,
            c.label.display_name(),
            c.confidence,
            text(c.transcript.as_deref().unwrap_or("")),
            text(&c.phonemes.as_ref().map(|p| p.join(" ")).unwrap_or_default())
        );
    }
    h.push_str("</table>\n</section>\n");
}

fn recommendations(h: &mut String, plan: &TherapyPlan) {
    let e = &plan.explanation;
    let g = &plan.primary_goal;
    let _ = writeln!(h, "<section id=\"therapy-recommendations\">\n<h2>Therapy Recommendations</h2>");
    let _ = writeln!(
        h,
        "<h3>Explanation</h3>\n<p><strong>Stuttering type:</strong> {}</p>\n<p><strong>Patient characteristics:</strong> {}</p>\n<p><strong>Therapeutic rationale:</strong> {}</p>",
        text(&e.stuttering_type_definition),
        text(&e.patient_characteristics),
        text(&e.therapeutic_rationale)
    );
    let _ = writeln!(
        h,
        "<h3>Primary Goal</h3>\n<p class=\"primary-goal\">{}</p>\n<ul><li><strong>Target:</strong> {}</li><li><strong>Baseline:</strong> {}</li><li><strong>Rationale:</strong> {}</li></ul>",
        text(&g.goal),
        text(&g.target),
        text(&g.baseline),
        text(&g.rationale)
    );
    for step in &plan.steps {
        let _ = writeln!(
            h,
            "<h3>{} <small>({})</small></h3>\n<p>{}</p>",
            text(&step.name),
            text(&step.week_range),
            text(&step.objective)
        );
        for s in &step.strategies {
            let r = &s.clinical_reasoning;
            let _ = writeln!(
                h,
                "<h4>{}</h4>\n<p>{}</p>\n<p><em>{}</em></p>\n<details><summary>Clinical reasoning</summary><ul>\
<li><strong>Observation:</strong> {}</li><li><strong>Rationale:</strong> {}</li>\
<li><strong>Expected outcome:</strong> {}</li><li><strong>Evidence:</strong> {}</li></ul></details>",
                text(&s.name),
                text(&s.description),
                text(&s.instructions),
                text(&r.observation),
                text(&r.clinical_rationale),
                text(&r.expected_outcome),
                text(&r.evidence_base)
            );
        }
    }
    h.push_str("</section>\n");
}

fn critic(h: &mut String, doc: &ResultDocument) {
    if doc.critic_texts.is_empty() && doc.loop_status.is_none() {
        return;
    }
    let _ = writeln!(h, "<section id=\"critic-feedback\">\n<h2>Critic Feedback</h2>");
    if let Some(LoopStatus::Degraded { round, reason }) = &doc.loop_status {
        let _ = writeln!(h, "<p class=\"banner\">Refinement stopped in round {round}: {}</p>", text(reason));
    }
    for (i, t) in doc.critic_texts.iter().enumerate() {
        let _ = writeln!(h, "<h3>Round {}</h3>\n<pre>{}</pre>", i + 1, text(t));
    }
    h.push_str("</section>\n");
}

fn history(h: &mut String, doc: &ResultDocument) {
    let _ = writeln!(h, "<section id=\"generation-history\">\n<h2>Generation History</h2>");
    if doc.generation_history.is_empty() {
        h.push_str("<p>No generations recorded.</p>\n");
    }
    for r in &doc.generation_history {
        let status = match &r.error {
            None => "ok".to_owned(),
            Some(e) => format!("unusable: {e}"),
        };
        let _ = writeln!(
            h,
            "<details><summary>#{} {} (round {}): {}</summary>\n<h4>System prompt</h4><pre>{}</pre>\n<h4>Human prompt</h4><pre>{}</pre>\n<h4>Output</h4><pre>{}</pre></details>",
            r.round,
            r.role,
            r.loop_round,
            text(&status),
            text(&r.prompt_system),
            text(&r.prompt_human),
            text(&r.raw_output)
        );
    }
    h.push_str("</section>\n");
}

fn audit(h: &mut String, doc: &ResultDocument) {
    let _ = writeln!(
        h,
        "<section id=\"audit-log\">\n<h2>Audit Log</h2>\n<p>Modifications used: {} of {}</p>\n<table class=\"audit\"><tr><th>Timestamp</th><th>Clinician</th><th>Action</th><th>Feedback</th><th>Resulting state</th></tr>",
        doc.review.modification_count,
        doc.review.max_modifications
    );
    for e in &doc.audit_log {
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            e.timestamp.to_rfc3339(),
            text(&e.clinician_id),
            e.action.as_str(),
            text(e.feedback.as_deref().unwrap_or("")),
            e.resulting_state.as_str()
        );
    }
    h.push_str("</table>\n</section>\n");
}
