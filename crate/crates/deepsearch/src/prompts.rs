//! Prompt templates for every model-facing stage. All templates are plain
//! text with `{name}` placeholders and can be overridden from files via
//! [`PromptSet::load_overrides`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown placeholder {{{0}}} in template")]
    UnknownPlaceholder(String),
    #[error("failed to read template override {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Fill `{name}` placeholders from the given map. Doubled braces (`{{`,
/// `}}`) escape literal braces.
pub fn fill(template: &str, vars: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|&(_, c)| c) == Some('{') => {
                chars.next();
                out.push('{');
            }
            '}' if chars.peek().map(|&(_, c)| c) == Some('}') => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let end = template[i..]
                    .find('}')
                    .map(|rel| i + rel)
                    .ok_or_else(|| TemplateError::UnknownPlaceholder(template[i..].to_owned()))?;
                let name = &template[i + 1..end];
                let value = vars
                    .get(name)
                    .ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_owned()))?;
                out.push_str(value);
                while let Some(&(j, _)) = chars.peek() {
                    if j > end {
                        break;
                    }
                    chars.next();
                }
            }
            c => out.push(c),
        }
    }
    Ok(out)
}

/// Marker the summarizer emits before its distilled answer.
pub const FINAL_INFORMATION_MARKER: &str = "**Final Information**";

/// Sentinel summary when retrieval produced nothing useful.
pub const NO_INFORMATION_SENTINEL: &str = "No helpful information found.";

/// Sentinel injected when the model repeats a query it already searched.
pub const REPEATED_QUERY_SENTINEL: &str =
    "You have searched this query. Please refer to previous results.";

/// Sentinel final answer for aborted runs.
pub const EMPTY_ANSWER_SENTINEL: &str = "";

pub const ENTITY_EXTRACTION: &str = r#"**Task Instruction:**

Identify and list all proper nouns (names of specific people, places, characters, titles, etc.) from the provided **Question** and **Answer**.

**Guidelines:**

1. **Analyze the Input:**
- Review both the question and answer carefully.
- Extract proper nouns that refer to specific entities.

2. **Output Format:**
Provide the results strictly following this JSON format:
{{
  "question": ["Proper nouns from the question"],
  "answer": ["Proper nouns from the answer"]
}}

**Example:**

Input:

Question: who does seth macfarlane play on american dad
Answer: stan smith and roger

Output:

{{
  "question": ["Seth MacFarlane", "American Dad"],
  "answer": ["Stan Smith", "Roger"]
}}

**Inputs:**
- **Question:**
{question}

- **Answer:**
{answer}

Now, extract proper nouns from the provided question-answer pair.
"#;

pub const WEBPAGE_REASONING: &str = r#"### Task Instruction:

You are tasked with reading and analyzing web pages based on the following inputs: **Search Query**, **Searched Web Pages**, and **Reference Entity**. Your objective is to provide sentences that directly answer the **Search Query**, using relevant information found in the **Searched Web Pages** and grounding the answer in the context of the **Reference Entity**.

### Guidelines:

1. **Analyze the Searched Web Pages:**
- Carefully review each searched web page.
- Identify the most relevant factual information to directly answer the **Search Query**.

2. **Formulate an Answer:**
- Summarize your analysis in one clear, accurate, and grammatically correct sentence that explicitly addresses the **Search Query**.
- The answer ranges from 1 to 3 sentences.
- Ensure that the answer clearly references the provided **Reference Entity**

3. **Output Format:**
- **If helpful information is found:** Present your answer in 1 to 3 sentences beginning with:
`**Final Information**`

- **If no helpful information is found:** Output the following:
`**Final Information** No helpful information found.`

### Inputs:
- **Search Query:**
{search_query}

- **Searched Web Pages:**
{document}

- **Reference Entity:**
{reference_entity}

Analyze each web page and clearly answer the query "{search_query}" in 1 to 3 sentences.
"#;

pub const CLUE_SUMMARIZATION: &str = r#"### Task Instruction:

You are given an entity and a list of clues about the entity. Your task is to summarize each clue into a concise clue about the entity, but remain the key information of the clue.

### Guidelines:

1. **Summarize Clues:**
- Summarize each clue into a concise clue.
- Remain the key information of the clue.

### Inputs:
- **Entity:**
{entity}

- **Input Clues:**
{input_list}

### Output Format:
**Summarized Clues:**
[
  "{{clue 1 summary}}",
  "{{clue 2 summary}}",
  ...
]
"#;

pub const COMPLEX_QUESTION: &str = r#"### Task Instruction:

You are provided with an entity and a set of clues. Then, generate a complex, implicit question that logically guides to the provided entity as the correct answer, without explicitly naming it or the related entities removed from the clues.

### Guidelines:

1. **Analyze the Clues:**
- Carefully examine each clue provided.
- Identify unique characteristics or context from these clues that indirectly lead to the given entity.

2. **Generate a Complex Question:**
- Formulate an insightful, implicit question.
- Your question should guide logically towards the entity, encouraging deduction.
- Avoid using pronouns or names in the clues that are highly related to the given entity.

### Example:

- **Entity:**
Queen

- **Clues:**
1. Known for energetic and theatrical live performances.
2. Freddie Mercury was famous for a wide vocal range.
3. Famous for blending rock with operatic and theatrical styles.
4. Produced the legendary album "A Night at the Opera."
5. Noted for the iconic anthem frequently performed at sports events.

- **Correct Output:**
**Complex Question:** Which celebrated rock band, recognized for energetic and theatrical live performances and a lead singer renowned for his exceptional vocal range, is famed for an innovative blend of operatic style and rock, creating a legendary album that includes a universally popular anthem commonly heard in sporting venues?
---

### Now Complete the Task:

- **Entity:**
{entity}

- **Selected Clues:**
{input_list}

### Output Format:
**Complex Question:** {{complex_question}}
"#;

pub const QUESTION_INTEGRATION: &str = r#"**Task Instruction:**

You have two questions provided as inputs (**Q1** and **Q2**). Your task is to integrate the descriptive content of **Q2** (which answers the entity {entity}) into **Q1** by replacing only the specified entity ({entity}) in **Q1**.

**Guidelines:**

1. **Identify Entity:**
   - Clearly identify the entity ({entity}) within Q1 to replace.

2. **Integration Procedure**
   - Replace only the entity ({entity}) from Q1 with the descriptive content of Q2.
   - The result must be one cohesive, grammatically correct, and logically coherent question.
   - Do not concatenate two separate questions. Instead, integrate smoothly.

3. **Output Format:**
   - Clearly present one single integrated question.

**Example:**

**Inputs:**
- **Q1:** Who is the lead vocal in Queen?
- **Q2:** Which celebrated rock band, recognized for dramatic live performances and a lead singer renowned for his exceptional vocal range, is famed for an innovative blend of operatic style and rock, creating a legendary album that includes a universally popular anthem commonly heard in sporting venues? (Answer: Queen)

- **Output:**
**Integrated Question:** Who is the lead vocal in the rock band, recognized for dramatic live performances and a lead singer renowned for his exceptional vocal range, is famed for an innovative blend of operatic style and rock, creating a legendary album that includes a universally popular anthem commonly heard in sporting venues?

---

**Now Complete the Task:**
**Inputs:**
- **Q1:** {question_1}
- **Q2:** {question_2} (Answer: {entity})

**Output Format:**
**Integrated Question:** {{integrated_question}}
"#;

pub const RESPONSE_GENERATION: &str = r#"### Task Instruction:
You will be given a question. Your task is to generate a detailed and step-by-step reasoning answer with parallel web search queries.

### Guidelines for Reasoning Answer Generation:
- For each step, explicitly perform the suggested queries, using:
<|begin_search_queries|>
query 1;
query 2;
...
<|end_search_queries|>
- When you have multiple queries that can be parallelized, put them together in one <|begin_search_queries|> and <|end_search_queries|> block separated by semicolons.
- The search results are followed by the search queries between <|begin_search_results|>...<|end_search_results|>. So, clearly confirm findings at each intermediate step and state a concise conclusion before moving to the next step.
- Use natural and conversational reasoning transitions (e.g., "First", "Wait", "Next", "Alternatively") to improve readability.
- Clearly present the final answer at the end of the reasoning as follows:
**Final Answer:**
\boxed{{YOUR_ANSWER}}

### Example

**Inputs:**
- Question:
Who is the lead vocal in the rock band recognized for dramatic live performances, a lead singer renowned for exceptional vocal range, an innovative blend of operatic style and rock, and a legendary album featuring an anthem frequently heard at sports events?

**Output:**
<think>
Okay, let's analyze the clues step by step. The question asks to find the lead vocalist of a rock band known for dramatic live performances and operatic-rock fusion, the lead vocalist's exceptional vocal range, and an universally recognized sports anthem. Let's start by searching for the rock band and then the lead vocalist.

Initially, several bands might fit this description, so I should perform some searches to narrow this down:
</think>

<|begin_search_queries|>
Rock band known for dramatic live performances and operatic-rock fusion;
Rock band with lead vocalist known for exceptional vocal range;
Rock band anthem commonly played at sports events
<|end_search_queries|>

<|begin_search_results|>

... The described band is Queen. ...

<|end_search_results|>

Given these strong clues, it could directly point towards Queen, particularly due to their operatic style, famously exemplified in the legendary album "A Night at the Opera". Indeed, Queen's anthems like "We Will Rock You" and "We Are the Champions" are frequently played at sporting events. Their vocalist, Freddie Mercury, is widely celebrated for his exceptional vocal range and theatrical stage presence.

To confirm this clearly, let's verify the lead vocalist of Queen explicitly:

<|begin_search_queries|>
The lead vocalist of Queen
<|end_search_queries|>

<|begin_search_results|>

... The lead vocalist of Queen is Freddie Mercury. ...

<|end_search_results|>

Given these confirmations, the band described by the clues is indeed Queen, and their iconic lead vocalist was Freddie Mercury.

**Final Answer:**
\boxed{{Freddie Mercury}}

---

### Inputs:

- **Question:**
{question}

Now, generate your detailed reasoning answer based on the provided question.
"#;

/// Instruction appended when a search budget is exhausted and the model must
/// answer with what it has gathered so far.
pub const FORCE_ANSWER: &str = "\n\nThe search budget is exhausted. You must not issue any further \
search queries. Using only the information gathered so far, output your final answer now as:\n\
**Final Answer:**\n\\boxed{{YOUR_ANSWER}}\n";

/// Judge prompt for model-based accuracy assessment. The verdict keyword on
/// the last line drives parsing.
pub const JUDGE: &str = r#"You are an evaluation assistant. Given a question, a gold answer, and a predicted answer, decide whether the prediction is semantically equivalent to the gold answer.

Question: {question}
Gold answer: {gold}
Predicted answer: {prediction}

Reply with a single word on the last line: "correct" if the prediction matches the gold answer, otherwise "incorrect".
"#;

/// The full template set, overridable per role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSet {
    pub entity_extraction: String,
    pub webpage_reasoning: String,
    pub clue_summarization: String,
    pub complex_question: String,
    pub question_integration: String,
    pub response_generation: String,
    pub force_answer: String,
    pub judge: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            entity_extraction: ENTITY_EXTRACTION.to_owned(),
            webpage_reasoning: WEBPAGE_REASONING.to_owned(),
            clue_summarization: CLUE_SUMMARIZATION.to_owned(),
            complex_question: COMPLEX_QUESTION.to_owned(),
            question_integration: QUESTION_INTEGRATION.to_owned(),
            response_generation: RESPONSE_GENERATION.to_owned(),
            force_answer: FORCE_ANSWER.to_owned(),
            judge: JUDGE.to_owned(),
        }
    }
}

impl PromptSet {
    /// Replace individual templates from files in `dir` named after the
    /// field (`entity_extraction.txt`, ...). Missing files keep defaults.
    pub fn load_overrides(&mut self, dir: &Path) -> Result<(), TemplateError> {
        let slots: [(&str, &mut String); 8] = [
            ("entity_extraction", &mut self.entity_extraction),
            ("webpage_reasoning", &mut self.webpage_reasoning),
            ("clue_summarization", &mut self.clue_summarization),
            ("complex_question", &mut self.complex_question),
            ("question_integration", &mut self.question_integration),
            ("response_generation", &mut self.response_generation),
            ("force_answer", &mut self.force_answer),
            ("judge", &mut self.judge),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_replaces_placeholders_and_escapes_braces() {
        let vars = BTreeMap::from([("question", "who?"), ("answer", "me")]);
        let out = fill("Q: {question} A: {answer} literal {{x}}", &vars).unwrap();
        assert_eq!(out, "Q: who? A: me literal {x}");
    }

    #[test]
    fn unknown_placeholder_errors() {
        let vars = BTreeMap::new();
        assert!(fill("{missing}", &vars).is_err());
    }

    #[test]
    fn default_templates_fill_cleanly() {
        let vars = BTreeMap::from([("question", "q"), ("answer", "a")]);
        let filled = fill(ENTITY_EXTRACTION, &vars).unwrap();
        assert!(filled.contains("- **Question:**\nq"));
        assert!(filled.contains("\"question\": [\"Proper nouns from the question\"]"));

        let vars = BTreeMap::from([
            ("search_query", "sq"),
            ("document", "doc"),
            ("reference_entity", "ent"),
        ]);
        assert!(fill(WEBPAGE_REASONING, &vars).unwrap().contains("sq"));

        let vars = BTreeMap::from([("question", "the question")]);
        let filled = fill(RESPONSE_GENERATION, &vars).unwrap();
        assert!(filled.contains("\\boxed{YOUR_ANSWER}"));
        assert!(filled.ends_with("Now, generate your detailed reasoning answer based on the provided question.\n"));
    }
}
