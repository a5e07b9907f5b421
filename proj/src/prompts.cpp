#include "timaudit/prompts.hpp"

#include "timaudit/errors.hpp"

namespace timaudit::prompts {

namespace {

const std::string kCuration = R"PROMPT(You are a technical reasoning assistant for mathematical problem solving. Your task is to evaluate mathematical problems used for benchmarking LLMs in terms of:

1. Python Usefulness: Whether using Python code is helpful for solving this problem.
2. Python Sufficiency: Whether Python code alone (without extra reasoning steps from the target LLM) is sufficient to fully solve this problem.

Use the following evaluation criteria:

- Mathematical Domain: What area(s) of mathematics does this problem involve, and how computational versus theoretical is this domain typically?
- Solution Type: What kind of answer or result is the problem asking for?
- Computational Approach: What computational strategies, if any, could be applied?
- Problem Scale: How do size and complexity affect computational feasibility?
- Verification Needs: Would solving the problem benefit from computational verification?
- Techniques Required: What mathematical insights or methods are necessary, and how much can be automated?

Based on your evaluation, provide:

- Python Usefulness: true/false
- Python Sufficiency: true/false
- Recommendation: One of "Pure Python", "Python + LLM Insight/Reasoning", "Python for Verification", "Python for Exploration", or "Minimal Python Role".

Problem:
{{problem}}

Respond strictly in the following JSON format:
{
    "problem": "repeat problem description here",
    "reasoning": {
        "mathematical_domain": "",
        "solution_type": "",
        "computational_approach": "",
        "problem_scale": "",
        "verification_needs": "",
        "techniques_required": ""
    },
    "python_usefulness": true or false,
    "python_sufficiency": true or false,
    "recommendation": "[one of the options above]"
}
)PROMPT";

const std::string kWinRate = R"PROMPT(You are an expert mathematician tasked with grading two solutions, "A" and "B", to the same competition-style problem. Evaluate which solution is better by assigning error severity scores (0 = low, 5 = high) for the following categories:

1. Logic (0-5): Errors due to logical fallacies or unjustified leaps in reasoning.
2. Assumption (0-5): Errors from unproven or incorrect assumptions that undermine subsequent steps.
3. Creativity (0-5): Errors from fundamentally incorrect or unoriginal strategies indicating failure to identify the right approach.
4. Algebra/Arithmetic (0-5): Errors arising from critical algebraic or arithmetic miscalculations.

Evaluation:
- Provide a brief justification for each score, referencing relevant mathematical concepts or reasoning techniques.
- Compute a final score as the average of the four error categories.
- Select the solution with the lower final score as the better one. If tied, prefer the solution with clearer reasoning.

Problem:
{{problem}}

Solution A:
{{solution_a}}

Solution B:
{{solution_b}}

Respond strictly in the following JSON format:
{
  "A_grades": {
    "logic": {"score": 0-5, "explanation": ""},
    "assumption": {"score": 0-5, "explanation": ""},
    "creativity": {"score": 0-5, "explanation": ""},
    "algebra_arithmetic": {"score": 0-5, "explanation": ""},
    "final_score": {"score": value}
  },
  "B_grades": {
    "logic": {"score": 0-5, "explanation": ""},
    "assumption": {"score": 0-5, "explanation": ""},
    "creativity": {"score": 0-5, "explanation": ""},
    "algebra_arithmetic": {"score": 0-5, "explanation": ""},
    "final_score": {"score": value}
  },
  "best_solution": "A or B"
}
)PROMPT";

const std::string kMissRate = R"PROMPT(You are an expert mathematician. You will be given a mathematical problem, a solution to that problem, and a gold solution to use as a reference. Your task is to identify which logical steps from the gold solution are absent in the given solution.

Instructions:
1. Parse the gold solution into an ordered list of atomic logical steps (Step 1, Step 2, ...). A step is the smallest self-contained claim or transformation needed to progress the proof.
2. For each gold step, decide whether the same reasoning (possibly re-worded) appears in the given solution. Mark a step as present if the solution makes the identical deduction or provides an equivalent justification.
3. Collect all steps that are absent from the given solution.

Problem:
{{problem}}

Solution:
{{solution}}

Gold solution:
{{gold_solution}}

Output format (strict JSON):
{
  "gold_steps": [
    { "step": <integer>, "summary": "<one-line summary of gold step>" }
  ],
  "missing_steps": [
    { "step": <integer>, "summary": "<one-line summary of gold step that is absent>" }
  ]
}
)PROMPT";

const std::string kErrorProfile = R"PROMPT(You are an expert mathematician grading a solution to a competition-style problem. Identify whether the solution exhibits each of the following error types:

1. Logic: Logical fallacies or unjustified leaps that disrupt reasoning.
2. Assumption: Unproven or incorrect assumptions that undermine subsequent steps.
3. Creativity: Fundamentally incorrect strategy indicating failure to identify the correct approach.
4. Algebra/Arithmetic: Critical algebraic or arithmetic miscalculations.
5. None of the above: No errors from the above categories are present.

Evaluation Guidelines:
- For each category, set "exists" to "yes" if that error occurs; otherwise "no".
- Provide a brief explanation for each category; if an error is detected, indicate where it occurs.
- Mark None of the above as "yes" only if all other categories are "no".

Problem:
{{problem}}

Solution:
{{solution}}

Output format (strict JSON):
{
  "logic": {"exists": "yes|no", "explanation": "your explanation here"},
  "assumption": {"exists": "yes|no", "explanation": "your explanation here"},
  "creativity": {"exists": "yes|no", "explanation": "your explanation here"},
  "algebra_arithmetic": {"exists": "yes|no", "explanation": "your explanation here"},
  "none_of_the_above": {"exists": "yes|no", "explanation": "your explanation here"}
}
)PROMPT";

const std::string kFinalAnswer = R"PROMPT(You are an expert mathematician checking whether a submitted final answer to a problem is mathematically equivalent to the reference answer. Treat different but equal representations as equivalent: equal rationals and decimals (1/2 and 0.5), algebraically identical expressions, reordered tuples only when order is irrelevant to the problem, and equivalent units. Do not award equivalence for answers that are merely close numerically.

Problem:
{{problem}}

Submitted final answer:
{{answer}}

Reference answer:
{{gold_answer}}

Respond strictly in the following JSON format:
{
  "equivalent": true or false
}
)PROMPT";

const std::string kDegradation = R"PROMPT(You are editing the response of a language model that is solving a math problem using a Python code interpreter.

Input:
- The original problem statement,
- The model's earlier solution steps, including interleaved reasoning, Python code interpreter calls, and their executed outputs (keep these unchanged),
- A single target text span to rewrite.

Task:
Rewrite only the target text span so that it continues the model's solution naturally, but exhibits an explicit over-reliance on executed code outputs, i.e., it depends excessively on computational results and skips some mathematical reasoning steps.

Instructions:
- Do not change or add any Python code cells or their outputs.
- Rewrite only the target text span in LaTeX format.
- Reduce or omit algebraic/logical derivations naturally.
- Phrase conclusions as outcomes of the computed results, using expressions such as:
  - "a straightforward numerical check shows that..."
  - "the computation suggests..."
  - "testing other patterns (with the tool) shows..."
- Do not truncate the solution; ensure it continues to the final stated answer.
- Preserve all partial or final numerical results (e.g., variable values, coordinates, or the final answer).

Problem:
{{problem}}

Solution steps:
{{solution}}

Target text span:
{{target_span}}
)PROMPT";

}  // namespace

const std::string& template_text(gateway::TemplateId id) {
    using gateway::TemplateId;
    switch (id) {
        case TemplateId::Curation: return kCuration;
        case TemplateId::WinRate: return kWinRate;
        case TemplateId::MissRate: return kMissRate;
        case TemplateId::ErrorProfile: return kErrorProfile;
        case TemplateId::FinalAnswer: return kFinalAnswer;
        case TemplateId::Degradation: return kDegradation;
    }
    raise(errc::config_error, "unknown template id");
}

std::string render(gateway::TemplateId id,
                   const std::map<std::string, std::string>& values) {
    const std::string& tmpl = template_text(id);
    std::string out;
    out.reserve(tmpl.size());
    std::map<std::string, bool> used;
    for (const auto& [k, v] : values) used[k] = false;

    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        std::size_t open = tmpl.find("{{", pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        std::size_t close = tmpl.find("}}", open + 2);
        if (close == std::string::npos) {
            raise(errc::config_error, "unterminated placeholder in template " +
                                          gateway::to_string(id));
        }
        std::string name = tmpl.substr(open + 2, close - open - 2);
        auto it = values.find(name);
        if (it == values.end()) {
            raise(errc::config_error, "template " + gateway::to_string(id) +
                                          " needs a value for {{" + name + "}}");
        }
        used[name] = true;
        out += it->second;
        pos = close + 2;
    }
    for (const auto& [k, was_used] : used) {
        if (!was_used) {
            raise(errc::config_error, "template " + gateway::to_string(id) +
                                          " has no placeholder {{" + k + "}}");
        }
    }
    return out;
}

gateway::JudgeParams default_params(gateway::TemplateId id) {
    gateway::JudgeParams p;
    if (id == gateway::TemplateId::Degradation) {
        p.temperature = 0.6;
        p.n_samples = 2;
    }
    return p;
}

gateway::JudgeRequest make_request(gateway::TemplateId id,
                                   const std::map<std::string, std::string>& values,
                                   const std::string& model_id) {
    gateway::JudgeRequest req;
    req.template_id = id;
    req.rendered_prompt = render(id, values);
    req.model_id = model_id;
    req.params = default_params(id);
    return req;
}

}  // namespace timaudit::prompts
