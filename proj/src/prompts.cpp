#include "simeval/prompts.hpp"

#include <sstream>

namespace simeval::prompts {

const std::string_view kActs =
    R"(You are a math education expert. Your job is to label the **dialogue acts** for student turns in a given dialogue.

These are the available dialogue act labels:
- Math Answer: When the tutor asks a math content-related question, the student attempts to answer to that question
- Seek Information: The student seeks more information regarding the math problem or topic, for example, by asking a clarifying or conceptual question
- Not Understanding: The student simply indicates that they do not know the answer to a question or do not understand a concept
- Acknowledge: The student simply acknowledges what the tutor said in the previous turn
- Off-Topic: The student utterance is unrelated to the problem or math topic, including greetings, goodbyes, and other casual conversation

For each **student turn** in the dialogue, choose the dialogue act that best describes the turn. Pick exactly one act for each turn from the list above, and write the dialogue act name exactly as it appears. Before writing the acts for a turn, provide reasoning about what the best act should be.

Please provide your answer as a JSON object with the following format:
{
  "turn n": {
    "reasoning": "...",
    "act": "..."
  },
  "turn n+2": {
    "reasoning": "...",
    "act": "..."
  },
  ...
})";

const std::string_view kCorrectness =
    R"(You are an experienced math teacher and education expert. You are given a dialogue between a student and tutor where the student is trying to solve a math problem. Your job is to identify when the student responds correctly to the tutor. Please follow these instructions carefully when making your prediction:
- For each student turn, identify the correctness of the student's response to the previous tutor turn.
- Correctness can be true, false, or null. It is true when the student correctly responds to the previous tutor turn. It is false if the student incorrectly responds to the previous tutor turn, or indicates they do not know the answer. It is null in all other cases, such as when the tutor does not ask a question or only asks a conversational question, or if the student response is purely conversational. A turn is conversational when it does not address a mathematical task posed by the tutor.
- Before making each correctness prediction, write a short summary of each student turn in the dialogue. The summary should include the task previously posed by the tutor, and explain why the student's response is correct, incorrect, or conversational.
- Your final prediction should be a JSON object using the template: {"turn n": {"summary": ..., "correct": true/false/null}, "turn n+2": ...}.
- Use the turn index from the conversation history as the key in your result. There should be exactly one entry for each student turn in the dialogue.)";

const std::string_view kKnowledgeComponents =
    R"(You are an experienced math teacher and education expert. You are given a dialogue between a student and tutor where the student is trying to solve a math problem. Your job is to list the knowledge components (KCs) that can be used to classify the learning objectives at each turn in this dialogue. Please follow these instructions carefully when making your prediction:
- Tutor turns are often phrased as questions or tasks. In these cases, choose KCs that the student will need in order to respond correctly to the tutor's question. If the tutor turn does not pose a question or task, then you do not need to assign KCs to it.
- You will be given a list of KCs to choose from. When choosing them, write them exactly as they appear.
- If the tutor posed a task but none of the given KCs apply, assign "Default".
- Write a short summary of each tutor turn in the dialogue, including the intended learning objectives.
- Along with each summary, list ALL candidate KCs that can be used to describe each tutor turn in the dialogue.
- Your final response should be a JSON object using the template: {"turn n": {"summary": "...", "kcs": ["kc 1 id", "kc 2 id", ...]}, "turn n+2": ...}
- Use the turn index from the conversation history as the key in your result. There should be exactly one entry for each tutor turn in the dialogue.)";

const std::string_view kSolution =
    R"(You are a math education expert. Your task is to analyze the options of math multiple choice questions. Follow these instructions carefully:
- First attempt to solve the problem. If it is not possible to solve the problem because it is poorly defined, then say the problem is not solvable.
- Then write an explanation for each option. If the option is the correct answer, write the correct solution to reach that answer. If the option is an incorrect answer, explain the error a student might make to reach that answer.
- Give your final response as a JSON object with the following template:
{
  "solution": ...,
  "solvable": true/false,
  "correct_option": 1-4,
  "option_1_explanation": ...,
  "option_2_explanation": ...,
  "option_3_explanation": ...,
  "option_4_explanation": ...
})";

const std::string_view kOcean =
    R"(You are analyzing a dialogue between a student and a math tutor. Your task is to assess the student's personality based on the OCEAN model, also known as the Big Five Traits.

**OCEAN Traits Description:**
- **Openness to Experience:** Reflects the student's curiosity, creativity, willingness to try new things, and openness to new ideas and experiences.
- **Conscientiousness:** Indicates the student's level of organization, diligence, responsibility, and reliability in approaching tasks.
- **Extraversion:** Represents how outgoing, energetic, and socially confident the student appears.
- **Agreeableness:** Measures the student's friendliness, cooperativeness, compassion, and willingness to collaborate.
- **Neuroticism:** Assesses the student's emotional stability, tendency to experience negative emotions such as anxiety, moodiness, or vulnerability to stress.

First provide reasoning about the student's behavior with respect to the OCEAN model. Then, determine if the student's expression of each trait is **high**, **neutral**, or **low**. Base your reasoning only on the dialogue provided. In your final answer, output your results as a JSON object with the following template:
{
  "reasoning": "...",
  "Openness": "low/neutral/high",
  "Conscientiousness": "low/neutral/high",
  "Extraversion": "low/neutral/high",
  "Agreeableness": "low/neutral/high",
  "Neuroticism": "low/neutral/high"
})";

const std::string_view kSummary =
    R"(You are analyzing a dialogue between a student and a math tutor. Your task is to summarize the student's persona based on their interactions in the dialogue. Focus on the following aspects:
- How well the student acquires knowledge during the dialogue.
- The types of mathematical errors the student makes.
- Any notable behavioral patterns, such as frequent question asking, immediately jumping to the answer, distracting from the task at hand, etc.
- The student's personality traits, such as openness, conscientiousness, extraversion, agreeableness, and neuroticism.
- Notable linguistic patterns in the student's responses.

Your response should be a single paragraph summarizing the student's persona.)";

const std::string_view kActClassifier =
    "Your task is to classify the dialogue acts for the last turn in the given dialogue.";

const std::string_view kCorrectnessClassifier =
    R"(Your task is to classify whether the last student turn in the given dialogue is one of: "correct", "incorrect", or "na".)";

const std::string_view kTutor = "You are a tutor guiding a student through a math problem.";

const std::string_view kJudge =
    R"(You are a math education expert. You will observe a tutoring dialogue where a student is attempting to solve a math problem. You will see two versions of the next student turn: a ground-truth turn and a candidate turn. Your job is to evaluate the correctness and errors of the candidate turn.
- The correctness of the ground-truth turn is given. You must evaluate the correctness of the candidate turn.
- Correctness can be "correct", "incorrect", or "na". It is "correct" if the student correctly responds to the previous tutor turn. It is "incorrect" if the student incorrectly responds to the previous tutor turn, or indicates they do not know the answer. It is "na" in all other cases, such as when the tutor does not ask a question or only asks a conversational question, or if the student response is purely conversational. A turn is conversational when it does not address a mathematical task posed by the tutor.
- If both the ground-truth AND candidate turns are "incorrect", evaluate if they have the same error. They have the same error if the two turns are mathematically EQUIVALENT. If they are mathematically inequivalent, they do NOT have the same error.

After reasoning, please return the correctness of the **candidate** turn as "correct", "incorrect", or "na". If both the ground-truth and candidate turns are incorrect, add "same error" or "different error" to your response (ex: "incorrect, same error"). Do not include any other text in your response.)";

const std::string_view kKnowledgeTracing =
    R"(You are an experienced math teacher. You are given a dialogue between a student and teacher where a student is trying to solve a math problem. Your job is to predict if the student has a particular knowledge component (KC) at the current point in the dialogue. Please follow these instructions carefully when making your prediction:
- The student will need to possess this KC in order to respond correctly to the teacher's most recent question.
- Use previous information in the dialogue to determine if the student has this KC or not.
- Only respond with a single word, "True" or "False".)";

const std::string_view kStudentFineTuned =
    "You are a student attempting to solve a math problem, seeking help from a tutor.";

#define SIMEVAL_STUDENT_BASE                                                                                    \
    "You will act as a student in a conversation with a teacher in training. You will need to act as much like " \
    "a student as possible. If possible do not respond with overly long messages. The conversation with the "   \
    "teacher will be about the following math problem. You may or may not know how to solve it already, let "   \
    "the teacher guide you to the correct understanding. You will be tested at the end and scored thus it is "   \
    "best if you collaborate with the teacher as it has more experience in math than you. If you believe you "   \
    "have figured out the problem and don't need any more help, put <end_of_dialogue> after your response."

const std::string_view kZeroShot = SIMEVAL_STUDENT_BASE;

const std::string_view kOceanStudent =
    SIMEVAL_STUDENT_BASE
    "\n\nYou will be given a Big Five persona that describes how you should act in the dialogue. Follow this "
    "persona as closely as possible.";

const std::string_view kOracleStudent =
    SIMEVAL_STUDENT_BASE
    "\n\nYou will be given a persona that describes how you should act in the dialogue. Follow this persona as "
    "closely as possible.";

const std::string_view kIclStudent =
    SIMEVAL_STUDENT_BASE
    "\n\nYou will also be given an example of a previous dialogue. Your responses should be similar to the ones "
    "in this example.";

const std::string_view kReasoningStudent = SIMEVAL_STUDENT_BASE R"(

Your response will be judged on how well it matches what the actual student said next in the dialogue (unseen). The following criteria will be used to evaluate your response:
- Acts: Does your response make the same dialogue act as the real student response
- Correctness: Does your response have the same correctness as the real student response
- Errors: If your response is an incorrect math answer, does it have the same underlying error as the real student response
- Knowledge: Does your response represent the same mastery of knowledge concepts as the real student response
- Linguistic: Does your response have the same linguistic features as the real student response

These are the available dialogue acts:
- Math Answer: When the tutor asks a math content-related question, the student attempts to answer to that question
- Seek Information: The student seeks more information regarding the math problem or topic, for example, by asking a clarifying or conceptual question
- Not Understanding: The student simply indicates that they do not know the answer to a question or do not understand a concept
- Acknowledge: The student simply acknowledges what the tutor said in the previous turn
- Off-Topic: The student utterance is unrelated to the problem or math topic, including greetings, goodbyes, and other casual conversation

These are the available correctness states:
- Correct: The student correctly responds to the mathematical task posed in the previous tutor turn
- Incorrect: The student incorrectly responds to the mathematical task posed in the previous tutor turn or indicates they don't know the answer
- NA: The tutor doesn't pose a task that has a clear correct/incorrect answer OR the student doesn't indicate correctness in their response

Reason about how to respond in order to maximize the evaluation criteria. Your final response should only contain the predicted student utterance.)";

#undef SIMEVAL_STUDENT_BASE

namespace {

std::string_view speaker_name(Speaker s) { return s == Speaker::tutor ? "Tutor" : "Student"; }

}  // namespace

std::string render_question(const Question& q, std::optional<int> correct_option) {
    std::ostringstream os;
    os << "Question: " << q.stem << '\n';
    static constexpr char kLetters[] = "ABCD";
    for (int i = 0; i < 4; ++i) os << kLetters[i] << ": " << q.options[i] << '\n';
    if (correct_option && *correct_option >= 1 && *correct_option <= 4)
        os << "Correct Answer: " << kLetters[*correct_option - 1] << '\n';
    return os.str();
}

std::string render_indexed_turns(std::span<const Turn> turns) {
    std::ostringstream os;
    for (const auto& t : turns) os << "turn " << t.index << " - " << speaker_name(t.speaker) << ": " << t.text << '\n';
    return os.str();
}

std::string render_plain_turns(std::span<const Turn> turns) {
    std::ostringstream os;
    for (const auto& t : turns) os << speaker_name(t.speaker) << ": " << t.text << '\n';
    return os.str();
}

std::string annotation_user_message(const Dialogue& d, std::optional<int> correct_option) {
    return render_question(d.question, correct_option) + "\nDialogue:\n" + render_indexed_turns(d.turns);
}

std::string kc_user_message(const Dialogue& d, std::optional<int> correct_option) {
    std::ostringstream os;
    os << render_question(d.question, correct_option) << "\nKnowledge components:\n";
    for (const auto& s : d.subjects) os << "- " << s << '\n';
    os << "\nDialogue:\n" << render_indexed_turns(d.turns);
    return os.str();
}

std::string render_persona(const OceanPersona& p) {
    std::ostringstream os;
    for (auto t : kAllTraits) os << to_string(t) << ": " << to_string(p.level(t)) << '\n';
    return os.str();
}

}  // namespace simeval::prompts
