//! Interactive chat: a human plays the user against a trained policy or the
//! rule agent, typing acts like `inform(area=v1)` or `request(name)`.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::comnet::PolicyNet;
use crate::env::{transcript_jsonl, DialogueAct, Intent, Session};
use crate::ontology::SubtaskSpec;
use crate::rng::stream_rng;
use crate::rule::{rule_low, rule_top, RuleState};
use crate::tensor::ParamRegistry;
use crate::Result;

use super::checkpoint::Checkpoint;
use super::ExperimentConfig;

const GRAMMAR_HINT: &str =
    "expected intent(slot=value, ...) with intent in {inform, request, confirm_answer, select_answer, bye, hello, thankyou, null}";

/// Parse one typed user line into dialogue acts, validated against the
/// active subtask's slots.
pub fn parse_user_line(line: &str, spec: &SubtaskSpec) -> std::result::Result<Vec<DialogueAct>, String> {
    let line = line.trim();
    let open = line.find('(').ok_or_else(|| format!("missing '(' — {GRAMMAR_HINT}"))?;
    if !line.ends_with(')') {
        return Err(format!("missing ')' — {GRAMMAR_HINT}"));
    }
    let name = line[..open].trim();
    let intent = Intent::parse(name).ok_or_else(|| format!("unknown intent '{name}' — {GRAMMAR_HINT}"))?;
    let body = &line[open + 1..line.len() - 1];
    let args: Vec<&str> = body
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();

    let check_slot = |slot: &str| -> std::result::Result<usize, String> {
        spec.slot_index(slot)
            .ok_or_else(|| format!("unknown slot '{slot}' in subtask '{}'", spec.name))
    };

    match intent {
        Intent::Inform | Intent::ConfirmAnswer | Intent::SelectAnswer => {
            if args.is_empty() {
                return Err(format!("{name} needs slot=value arguments"));
            }
            let mut acts = Vec::new();
            for arg in args {
                let (slot, value) = arg
                    .split_once('=')
                    .ok_or_else(|| format!("'{arg}' is not slot=value — {GRAMMAR_HINT}"))?;
                let (slot, value) = (slot.trim(), value.trim());
                if value.is_empty() {
                    return Err(format!("empty value in '{arg}'"));
                }
                let j = check_slot(slot)?;
                if value != crate::ontology::DONTCARE && !spec.slots[j].values.iter().any(|v| v == value) {
                    return Err(format!("unknown value '{value}' for slot '{slot}'"));
                }
                acts.push(DialogueAct {
                    intent,
                    slot: Some(slot.to_string()),
                    value: Some(value.to_string()),
                    confidence: 1.0,
                });
            }
            Ok(acts)
        }
        Intent::Request => {
            if args.is_empty() {
                return Err("request needs at least one slot".into());
            }
            let mut acts = Vec::new();
            for arg in args {
                if arg.contains('=') {
                    return Err(format!("request takes bare slots, got '{arg}'"));
                }
                check_slot(arg)?;
                acts.push(DialogueAct::request(arg));
            }
            Ok(acts)
        }
        Intent::Bye | Intent::Hello | Intent::Thankyou | Intent::Null => {
            if !args.is_empty() {
                return Err(format!("{name}() takes no arguments"));
            }
            Ok(vec![DialogueAct::new(intent)])
        }
    }
}

/// Which agent answers the human.
pub enum ChatPolicy {
    Rule,
    Net {
        net: PolicyNet,
        reg_top: ParamRegistry,
        reg_low: ParamRegistry,
    },
}

impl ChatPolicy {
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<ChatPolicy> {
        let net = ckpt.build_net()?;
        Ok(ChatPolicy::Net {
            net,
            reg_top: ckpt.reg_top,
            reg_low: ckpt.reg_low,
        })
    }
}

fn render_sys(rendered: &(String, Option<String>, Option<String>)) -> String {
    match rendered {
        (intent, Some(slot), Some(value)) if intent == "inform_entity" && slot == "entity" => {
            format!("inform({value})")
        }
        (intent, None, None) if intent == "inform_entity" => "inform(no_match)".into(),
        (intent, Some(slot), Some(value)) => format!("{intent}({slot}={value})"),
        (intent, Some(slot), None) => format!("{intent}({slot})"),
        (intent, _, _) => format!("{intent}()"),
    }
}

fn describe_goal(session: &Session) -> String {
    let ctx = session.ctx();
    let goal = session.goal();
    let mut out = String::from("User goal:\n");
    for (k, sub) in ctx.ontology.subtasks.iter().enumerate() {
        let mut constraints = Vec::new();
        for (j, &slot) in ctx.informable[k].iter().enumerate() {
            match goal.subtasks[k].constraints[j] {
                Some(crate::ontology::Constraint::Value(v)) => {
                    constraints.push(format!("{}={}", sub.slots[slot].name, sub.slots[slot].values[v]))
                }
                Some(crate::ontology::Constraint::DontCare) => {
                    constraints.push(format!("{}=dontcare", sub.slots[slot].name))
                }
                None => {}
            }
        }
        let requests: Vec<String> = goal.subtasks[k]
            .requests
            .iter()
            .map(|&slot| sub.slots[slot].name.clone())
            .collect();
        out.push_str(&format!(
            "  {}: [{}]  req: [{}]\n",
            sub.name,
            constraints.join(", "),
            requests.join(", ")
        ));
    }
    out
}

/// Drive one interactive dialogue over the given reader/writer. The system
/// speaks first each turn; the typed reply is absorbed without the noise
/// channel. Returns whether the dialogue succeeded.
pub fn run_chat(
    config: &ExperimentConfig,
    policy: ChatPolicy,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    transcript_path: Option<&Path>,
) -> Result<bool> {
    let ctx = Arc::new(config.task_context()?);
    let mut session = Session::new(
        config.env.clone(),
        ctx.clone(),
        stream_rng(config.env.seed, "chat", 0),
    );
    session.enable_transcript();
    writeln!(output, "{}", describe_goal(&session))?;

    let mut rule_state = RuleState::new(&ctx.layout.slot_counts);
    let mut current_subtask = usize::MAX;

    while !session.dialogue_terminated() {
        let subtask = match &policy {
            ChatPolicy::Rule => rule_top(&session)?,
            ChatPolicy::Net { net, reg_top, .. } => {
                let belief = session.belief().vector(&ctx.layout);
                let (q_top, _) = net.forward_top(reg_top, &belief)?;
                let mask = session.legal_subtasks();
                crate::hrl::select_subtask(&q_top, &mask, 0.0, &mut stream_rng(0, "unused", 0))?
            }
        };
        if subtask != current_subtask {
            writeln!(output, "=== subtask: {} ===", ctx.ontology.subtasks[subtask].name)?;
            current_subtask = subtask;
        }
        let action_index = match &policy {
            ChatPolicy::Rule => {
                let action = rule_low(&session, subtask, &mut rule_state);
                ctx.space
                    .block(subtask)
                    .find(|&i| ctx.space.actions[i] == action)
                    .expect("rule action in space")
            }
            ChatPolicy::Net { net, reg_low, .. } => {
                let belief = session.belief().vector(&ctx.layout);
                let (q_low, _) = net.forward_low(reg_low, &belief, subtask)?;
                crate::hrl::select_action(
                    &q_low,
                    ctx.space.block(subtask),
                    0.0,
                    &mut stream_rng(0, "unused", 0),
                )
            }
        };

        let (pending, rendered) = session.begin_external_turn(action_index)?;
        writeln!(output, "sys : {}", render_sys(&rendered))?;
        write!(output, "user> ")?;
        output.flush()?;

        let acts = loop {
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                writeln!(output, "(end of input — hanging up)")?;
                break vec![DialogueAct::new(Intent::Bye)];
            }
            if line.trim().is_empty() {
                break vec![DialogueAct::new(Intent::Null)];
            }
            match parse_user_line(&line, &ctx.ontology.subtasks[subtask]) {
                Ok(acts) => break acts,
                Err(hint) => {
                    writeln!(output, "could not parse: {hint}")?;
                    write!(output, "user> ")?;
                    output.flush()?;
                }
            }
        };
        let result = session.finish_external_turn(pending, acts)?;
        if result.subtask_terminated && !result.dialogue_terminated {
            let verdict = if result.subtask_success { "completed" } else { "failed" };
            writeln!(
                output,
                "--- subtask {} {verdict} ---",
                ctx.ontology.subtasks[subtask].name
            )?;
        }
    }

    let success = session.dialogue_success();
    if success {
        writeln!(output, "*SUCCESS — all subtasks completed")?;
    } else {
        let unfinished: Vec<&str> = ctx
            .ontology
            .subtasks
            .iter()
            .enumerate()
            .filter(|(k, _)| !session.subtask_succeeded(*k))
            .map(|(_, s)| s.name.as_str())
            .collect();
        writeln!(output, "*FAILED — unfinished: {}", unfinished.join(", "))?;
    }
    if let Some(path) = transcript_path {
        std::fs::write(path, transcript_jsonl(session.transcript()))?;
        writeln!(output, "transcript written to {}", path.display())?;
    }
    Ok(success)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::preset_toy_cr;

    #[test]
    fn parses_informs_and_requests() {
        let spec = preset_toy_cr();
        let acts = parse_user_line("inform(food=v2, area=dontcare)", &spec).unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!(acts[0].slot.as_deref(), Some("food"));
        assert_eq!(acts[1].value.as_deref(), Some("dontcare"));

        let acts = parse_user_line("request(name)", &spec).unwrap();
        assert_eq!(acts[0].intent, Intent::Request);

        let acts = parse_user_line("bye()", &spec).unwrap();
        assert_eq!(acts[0].intent, Intent::Bye);
    }

    #[test]
    fn malformed_lines_report_hints() {
        let spec = preset_toy_cr();
        assert!(parse_user_line("inform(area=", &spec).is_err());
        assert!(parse_user_line("inform(nosuch=v1)", &spec).is_err());
        assert!(parse_user_line("inform(food=v99)", &spec).is_err());
        assert!(parse_user_line("shout(food=v1)", &spec).is_err());
        assert!(parse_user_line("bye(now)", &spec).is_err());
        assert!(parse_user_line("request(food=v1)", &spec).is_err());
    }

    #[test]
    fn scripted_chat_reaches_a_verdict() {
        let mut config = ExperimentConfig::default();
        config.ontology = super::super::OntologySource::Preset("toyCR+toySFR".into());
        config.policy = super::super::PolicyFamily::Rule;
        // One malformed line (reprompted), then hang up.
        let script = "inform(area=\nbye()\n";
        let mut input = std::io::BufReader::new(script.as_bytes());
        let mut output = Vec::new();
        let success = run_chat(&config, ChatPolicy::Rule, &mut input, &mut output, None).unwrap();
        let text = String::from_utf8(output).unwrap();
        assert!(!success);
        assert!(text.contains("User goal"));
        assert!(text.contains("could not parse"));
        assert!(text.contains("*FAILED"));
    }
}
