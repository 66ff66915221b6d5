//! Parses raw policy replies and walks the stage machine by hand.

use steprag::{parse_action, transition, AgentState};

fn main() {
    let mut state = AgentState::new("Which valley is Lake Orvan in?");
    let replies = [
        "I should look this up. <query>Lake Orvan</query>",
        "<evidence>Lake Orvan lies in the Tesk valley.</evidence>",
        "<answer>Tesk</answer>",
    ];
    for raw in replies {
        let step = parse_action(raw, state.stage).expect("reply parses in this stage");
        println!("{:?} -> {:?}: {:?}", state.stage, step.kind, step.payload);
        state = transition(&state, step).expect("legal move");
    }
    println!("final stage {:?}, answer {:?}", state.stage, state.answer());

    // tags are case-sensitive and must match the stage
    for bad in ["<ANSWER>x</ANSWER>", "<evidence>too early</evidence>"] {
        match parse_action(bad, AgentState::new("q").stage) {
            Ok(step) => println!("{bad:?} parsed as {:?}", step.kind),
            Err(e) => println!("{bad:?} rejected: {e}"),
        }
    }
}
