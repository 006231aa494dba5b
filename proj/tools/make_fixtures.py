#!/usr/bin/env python3
"""Regenerates the fixtures under data/. Output is deterministic."""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
DATA = ROOT / "data"

COURSE = "intro-ai"

KCS = [
    ("KC1", "Machine learning fundamentals", ""),
    ("KC1.1", "Supervised learning setup", ""),
    ("KC1.1.1", "Features, labels and training examples", "what goes into X and y"),
    ("KC1.1.2", "Train, validation and test splits", "why held-out data is needed"),
    ("KC1.2", "Model evaluation", ""),
    ("KC1.2.1", "Classification accuracy and the estimator score method",
     "score(X, y) on a classifier returns mean accuracy on the given data"),
    ("KC1.2.2", "Precision, recall and F1", ""),
    ("KC1.2.3", "Cross-validation", "k-fold estimates of generalization"),
    ("KC1.3", "Linear models", ""),
    ("KC1.3.1", "Logistic regression: sigmoid and decision boundary",
     "outputs are probabilities; the boundary is linear in the features"),
    ("KC1.3.2", "Linear regression and least squares", ""),
    ("KC1.4", "Overfitting and regularization", ""),
    ("KC1.4.1", "Bias-variance trade-off", ""),
    ("KC1.4.2", "L1 and L2 regularization", ""),
    ("KC1.5", "Data preprocessing", ""),
    ("KC1.5.1", "Feature scaling and standardization", ""),
    ("KC1.5.2", "Encoding categorical variables", ""),
    ("KC1.6", "Optimization", ""),
    ("KC1.6.1", "Gradient descent and the learning rate",
     "step size controls convergence; too large diverges, too small stalls"),
    ("KC1.6.2", "Loss functions", "cross-entropy versus squared error"),
    ("KC2", "Neural networks", ""),
    ("KC2.1", "Perceptrons and multilayer networks", ""),
    ("KC2.1.1", "Activation functions", "why non-linearity is needed"),
    ("KC2.2", "Backpropagation", ""),
    ("KC2.2.1", "Chain rule in backpropagation", ""),
    ("KC2.3", "Convolutional networks", ""),
    ("KC2.3.1", "Convolution and pooling output shapes", ""),
    ("KC2.4", "Recurrent networks", ""),
    ("KC2.4.1", "Hidden state and sequence processing in RNNs",
     "the hidden state carries information across time steps"),
    ("KC2.4.2", "Vanishing gradients and LSTM gates", ""),
    ("KC2.5", "Training practice", ""),
    ("KC2.5.1", "Mini-batches and epochs", ""),
    ("KC2.5.2", "Dropout", ""),
    ("KC3", "Search and reasoning", ""),
    ("KC3.1", "Uninformed search", ""),
    ("KC3.1.1", "Breadth-first versus depth-first search", ""),
    ("KC3.2", "Informed search", ""),
    ("KC3.2.1", "Admissible heuristics in A*", ""),
    ("KC3.3", "Adversarial search", ""),
    ("KC3.3.1", "Minimax and alpha-beta pruning", ""),
    ("KC4", "Programming tools", ""),
    ("KC4.1", "NumPy arrays and broadcasting", ""),
    ("KC4.2", "PyTorch tensors and autograd", ""),
    ("KC4.3", "scikit-learn estimator API", "fit, predict, score"),
]


def dump(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def kc_list():
    comps = []
    for kc_id, title, detail in KCS:
        c = {"id": kc_id, "title": title}
        if detail:
            c["detail"] = detail
        comps.append(c)
    return {"course_id": COURSE, "components": comps}


def gap(kc, conf, text):
    return {"verdict": "gap", "kc_id": kc, "confidence": conf, "misconception": text}


# --- benchmark -------------------------------------------------------------

GROUPS = [
    ("g1", "KC1.6.1", [
        "My gradient descent loss keeps jumping around and sometimes becomes nan. I set the learning rate to 5 because bigger steps should get to the minimum faster, right?",
        "I think the learning rate only changes how fast it finishes, not whether it converges at all, so I would rather keep it large and train for fewer epochs.",
    ], "a learning rate that is too large makes gradient descent overshoot and diverge"),
    ("g2", "KC2.4.1", [
        "For the sequence assignment I feed each word of the sentence into the RNN separately and then average the outputs. Is that how recurrent networks are supposed to work?",
        "I reset the hidden state to zeros before every word so the steps stay independent of each other, otherwise earlier words would leak into later predictions.",
    ], "the hidden state is what carries context from earlier time steps"),
    ("g3", "KC1.3.1", [
        "Logistic regression gives me numbers like 0.73 for each example. I assumed that is the predicted value of the label, like in linear regression, so I round it.",
        "The boundary should curve around the points since the sigmoid is curved, so I do not see why it is called a linear classifier at all in the slides.",
    ], "the sigmoid output is a probability and the decision boundary is linear in the features"),
    ("g4", "KC1.2.1", [
        "I trained a LogisticRegression model and called model.score(X_test, y_test) which printed 0.91. Does that mean 91% of the loss was removed during training?",
        "So score is the training loss then? I was going to report it as the error rate of the model in my write-up for the homework question on evaluation.",
    ], "score on a classifier returns mean accuracy, not a loss"),
]

BEHAVIORS = ["terse", "verbose", "copies-material", "asks-follow-ups", "overconfident"]

# Profiles (0-based) whose planted KC is only found on the second turn.
SECOND_TURN = {3, 4, 9, 13, 14, 19}
# Profiles where a noise KC outranks the planted one.
TOP1_MISS = {2: "KC1.5.1", 7: "KC4.2", 12: "KC1.3.2", 17: "KC4.3"}
# Lower-confidence noise on other profiles; each noise KC appears in at most
# two sessions.
NOISE = {0: "KC4.1", 5: "KC2.5.1", 10: "KC1.6.2", 15: "KC1.2.2", 6: "KC4.2", 11: "KC1.5.1"}

TUTOR_OPENERS = {
    "KC1.6.1": "Let's look at what a single gradient descent update does. The step is the learning rate times the gradient, so its size matters for whether the loss goes down.",
    "KC2.4.1": "A recurrent network processes a sequence one step at a time and passes something from each step to the next.",
    "KC1.3.1": "Logistic regression passes a linear score through the sigmoid function, which squashes it into the range between 0 and 1.",
    "KC1.2.1": "For scikit-learn classifiers, score(X, y) compares predict(X) with y and reports a summary number.",
}
TUTOR_PROBES = {
    "KC1.6.1": "What do you expect to happen to the loss if one step jumps past the minimum to the other side of the valley?",
    "KC2.4.1": "What information do you think the hidden state carries from one word to the next?",
    "KC1.3.1": "If the output is 0.73, what event do you think that number describes?",
    "KC1.2.1": "What would score return if the model predicted every test label correctly?",
}


def benchmark():
    profiles, dialogue, analysis = [], [], []
    for p in range(20):
        gid, planted, script, misconception = GROUPS[p // 5]
        member = p % 5
        profiles.append({
            "profile_id": f"p{p + 1:02d}",
            "group_id": gid,
            "missing_kc": planted,
            "behavior": BEHAVIORS[member],
            "script": script,
        })
        opener, probe = TUTOR_OPENERS[planted], TUTOR_PROBES[planted]
        dialogue.append(f"{opener} {probe}")
        dialogue.append(f"Good, you are reasoning about it. {probe} Try to explain it in your own words.")

        turn1, turn2 = [], []
        planted_conf = 0.6 if p in TOP1_MISS else 0.85
        if p in SECOND_TURN:
            turn1.append({"verdict": "insufficient_evidence"})
            turn2.append(gap(planted, planted_conf, misconception))
        else:
            turn1.append(gap(planted, planted_conf, misconception))
            turn2.append(gap(planted, min(0.95, planted_conf + 0.05), misconception))
        if p in TOP1_MISS:
            turn1.append(gap(TOP1_MISS[p], 0.9, "applies a related idea from another topic incorrectly"))
        if p in NOISE:
            turn2.append(gap(NOISE[p], 0.3, "a side remark suggests shaky understanding"))
        if p == 8:
            turn2.append(gap("KC9.9", 0.5, "refers to a component outside the course list"))
        analysis.append({"findings": turn1})
        analysis.append({"findings": turn2})
    return profiles, {"dialogue": dialogue, "analysis": analysis}


# --- completeness ----------------------------------------------------------

# (labels, student turns, per-turn findings). Findings may exceed the labels.
DIALOGUES = [
    (["KC1.2.1"], [
        "how do I compute the accuracy of my classifier for homework 2, is score the right method?",
        "I thought score gave the loss, so lower should be better, that is why I minimized it.",
    ], [[gap("KC1.2.1", 0.8, "believes score returns a loss")], [gap("KC1.2.1", 0.9, "minimizes accuracy as if it were a loss")]]),
    (["KC1.6.1"], [
        "My training loss explodes to nan after a few iterations of gradient descent. I use lr=10.",
        "Smaller learning rates are only slower, they never change the final result, right?",
    ], [[gap("KC1.6.1", 0.7, "picks an enormous learning rate")], [gap("KC1.6.1", 0.85, "thinks step size cannot cause divergence")]]),
    (["KC2.4.1", "KC2.4.2"], [
        "Why does my RNN forget the beginning of long sentences? I reset hidden state each word.",
        "Would an LSTM fix it even if I keep resetting the state? The gates should remember things.",
    ], [[gap("KC2.4.1", 0.8, "resets the hidden state between time steps")], [gap("KC2.4.2", 0.7, "expects gates to help without carried state")]]),
    (["KC1.3.1"], [
        "Is the output of logistic regression the class label? I get 0.2 and 0.9 and so on.",
        "So I should treat 0.9 as a regression value and compute squared error on it?",
    ], [[gap("KC1.3.1", 0.75, "reads probabilities as labels")], [gap("KC1.3.1", 0.8, "treats probabilities as regression targets"), gap("KC1.6.2", 0.5, "uses squared error for classification")]]),
    (["KC1.1.2"], [
        "I tuned my hyperparameters on the test set and got 99%. Can I report that number?",
        "The validation set seems pointless if I already have a test set, why do we need three splits?",
    ], [[gap("KC1.1.2", 0.9, "tunes on the test set")], [gap("KC1.1.2", 0.85, "sees no purpose in a validation split")]]),
    (["KC1.4.1", "KC1.4.2"], [
        "My model gets 100% training accuracy but 60% test accuracy. More features should fix that?",
        "What does the alpha in Ridge do? I set it to zero because regularization hurts accuracy.",
    ], [[gap("KC1.4.1", 0.8, "answers overfitting with more capacity")], [gap("KC1.4.2", 0.85, "disables regularization to maximize accuracy")]]),
    (["KC2.1.1"], [
        "If I stack linear layers without activations, the network is deeper so it is more powerful?",
        "Then ReLU is only there to speed up training, not to change what the network can represent?",
    ], [[gap("KC2.1.1", 0.85, "thinks stacked linear layers add expressiveness")], [gap("KC2.1.1", 0.8, "misses the role of non-linearity")]]),
    (["KC2.2.1"], [
        "In backprop do we just multiply the error by the weights of the last layer for every layer?",
        "I do not see where the derivative of the activation comes in when going backwards.",
    ], [[gap("KC2.2.1", 0.75, "omits intermediate Jacobians")], [gap("KC2.2.1", 0.85, "ignores activation derivatives in the chain rule")]]),
    (["KC2.3.1"], [
        "My conv layer gets a 32x32 input with a 5x5 kernel and no padding. Why is the output not 32x32?",
        "So pooling also keeps the size the same and only changes the values?",
    ], [[gap("KC2.3.1", 0.8, "expects convolution to preserve size without padding")], [gap("KC2.3.1", 0.75, "thinks pooling preserves spatial size")]]),
    (["KC3.2.1"], [
        "For A* I used the heuristic 2 times the straight-line distance so it searches faster. Is it still optimal?",
        "An overestimating heuristic just finds the goal sooner, it cannot return a worse path, can it?",
    ], [[gap("KC3.2.1", 0.85, "inflates the heuristic")], [gap("KC3.2.1", 0.9, "believes overestimation keeps optimality")]]),
    (["KC3.3.1"], [
        "In minimax, does the max player also assume the opponent picks the move that is best for max?",
        "Alpha-beta pruning can change which move minimax picks, so I should not use it for grading?",
    ], [[gap("KC3.3.1", 0.8, "misreads the opponent model")], [gap("KC3.3.1", 0.85, "thinks pruning changes the result")]]),
    (["KC1.5.1"], [
        "KNN gives weird results when one feature is income and the other is age. Why would that matter?",
        "Should I scale the test set using its own mean and standard deviation then?",
    ], [[gap("KC1.5.1", 0.8, "ignores feature scale in distance methods")], [gap("KC1.5.1", 0.75, "fits the scaler on test data"), gap("KC1.1.2", 0.4, "leaks test statistics")]]),
    (["KC1.5.2"], [
        "I encoded the colors red, green, blue as 1, 2, 3 for linear regression. Is that fine?",
        "Blue is then bigger than red, but that should not matter for the model, right?",
    ], [[gap("KC1.5.2", 0.8, "uses ordinal codes for nominal data")], [gap("KC1.5.2", 0.85, "thinks imposed order is harmless")]]),
    (["KC1.2.2", "KC1.2.1"], [
        "My fraud detector has 99% accuracy but catches no fraud cases. How can both be true?",
        "Which number should I look at instead, precision or recall, if missing fraud is costly?",
    ], [[gap("KC1.2.1", 0.7, "trusts accuracy on imbalanced data")], [gap("KC1.2.2", 0.8, "unsure which metric captures missed positives")]]),
    (["KC2.5.1"], [
        "What is the difference between an epoch and a batch? I set batch size to the dataset size.",
        "Then one epoch is one gradient step, and I need thousands of epochs, is that normal?",
    ], [[gap("KC2.5.1", 0.75, "confuses batch and epoch")], [gap("KC2.5.1", 0.7, "full-batch training assumptions")]]),
    (["KC4.1"], [
        "NumPy lets me add a (3,1) array to a (1,4) array and I got a (3,4) result. Is that a bug?",
        "I expected an error because the shapes are different, how does NumPy decide?",
    ], [[gap("KC4.1", 0.8, "unaware of broadcasting")], [gap("KC4.1", 0.75, "does not know the broadcasting rules")]]),
    (["KC4.2"], [
        "My PyTorch loss.backward() gives None gradients for my weights. I created them with torch.tensor.",
        "Do I need to call backward on each weight separately to get its gradient?",
    ], [[gap("KC4.2", 0.85, "forgets requires_grad")], [gap("KC4.2", 0.7, "misunderstands autograd graph")]]),
    (["KC1.2.3", "KC1.1.2"], [
        "For 5-fold cross-validation I train 5 times on the full data and average. Is that right?",
        "After cross-validation I still report the score on the training data as the final number.",
    ], [[gap("KC1.2.3", 0.8, "does not hold out a fold")], [gap("KC1.1.2", 0.7, "reports training performance")]]),
    (["KC2.4.1"], [
        "implement rnn using torch",
    ], None),
    (["KC3.1.1"], [
        "BFS and DFS should both find the shortest path in an unweighted maze, they visit everything anyway.",
        "DFS uses less memory so I always prefer it for finding shortest routes.",
    ], [[gap("KC3.1.1", 0.8, "thinks DFS finds shortest paths")], [gap("KC3.1.1", 0.85, "ignores DFS non-optimality")]]),
]

TUTOR_TURNS = [
    "Good question. Before I answer, what do you think the method computes from X and y?",
    "Let's check that together. What happens if you try it on a tiny example by hand?",
    "That is a common point of confusion. Which part of the lecture notes did you base this on?",
]


def completeness():
    transcripts, labels, analysis = [], {}, []
    for i, (lab, turns, findings) in enumerate(DIALOGUES):
        did = f"d{i + 1:02d}"
        messages = []
        for j, text in enumerate(turns):
            messages.append({"role": "user", "content": text})
            messages.append({"role": "assistant", "content": TUTOR_TURNS[(i + j) % len(TUTOR_TURNS)]})
        transcripts.append({"dialogue_id": did, "course_id": COURSE, "messages": messages})
        labels[did] = lab
        if findings is not None:
            analysis.extend({"findings": f} for f in findings)
    return transcripts, labels, {"analysis": analysis}


# --- demo ------------------------------------------------------------------

DEMO_CORPUS = {
    "01-logistic-regression.md": """# Logistic regression

Logistic regression models the probability that an example belongs to the positive class.
A linear score w.x + b is passed through the sigmoid function, which maps any real number
into the interval (0, 1). Predicting a class means thresholding that probability, usually at 0.5,
so the decision boundary w.x + b = 0 is linear in the features.

In scikit-learn, LogisticRegression().fit(X_train, y_train) learns w and b.
model.predict(X) returns class labels and model.predict_proba(X) returns class probabilities.
""",
    "02-evaluation.md": """# Evaluating classifiers

Every scikit-learn classifier provides score(X, y). For classifiers it returns the mean accuracy:
the fraction of examples in X whose predicted label equals the label in y. A score of 0.91
means 91% of the given examples were classified correctly. It is not a loss and higher is better.

Accuracy can mislead on imbalanced data. Precision is the fraction of predicted positives that are
truly positive; recall is the fraction of true positives the model finds. F1 is their harmonic mean.
Always evaluate on held-out data that played no part in training or tuning.
""",
    "03-gradient-descent.md": """# Gradient descent

Gradient descent updates parameters by stepping against the gradient of the loss:
w <- w - lr * grad L(w). The learning rate lr sets the step size. A rate that is too small makes
progress slow; a rate that is too large overshoots the minimum and the loss can oscillate or diverge.
Plot the training loss per epoch to diagnose the learning rate.
""",
    "04-recurrent-networks.md": """# Recurrent networks

A recurrent neural network reads a sequence one element at a time. At each step it combines the
current input with its hidden state and produces a new hidden state, so information from earlier
elements can influence later outputs. In PyTorch, nn.RNN and nn.LSTM return both the per-step
outputs and the final hidden state. LSTMs add gates that control what the state keeps and forgets,
which eases the vanishing-gradient problem on long sequences.
""",
}

DEMO_DIALOGUE = [
    "Good start. score(X_test, y_test) on a classifier compares the model's predictions with y_test. What do you think the number 0.91 counts?",
    "Not quite: for classifiers score returns mean accuracy, the fraction of test examples predicted correctly, so higher is better. How would you express 0.91 as a count if the test set has 200 examples?",
    "Exactly, 182 of 200 correct. Since it is accuracy and not a loss, would you still call it an error rate in your write-up?",
    "Right, the error rate would be 1 - 0.91 = 0.09. Is there anything else about evaluation you want to go over?",
    "Happy to help. Feel free to ask about any other part of the assignment.",
    "Sure. What have you tried so far?",
]

DEMO_ANALYSIS = [
    {"findings": [{"verdict": "insufficient_evidence"}]},
    {"findings": [gap("KC1.2.1", 0.85, "believes score returns the loss that was minimized during training")]},
    {"findings": [{"verdict": "correct"}]},
    {"findings": [{"verdict": "correct"}]},
    {"findings": [{"verdict": "correct"}]},
    {"findings": [{"verdict": "correct"}]},
]

DEMO_STUDENT = [
    "I trained a LogisticRegression model for homework 2 and called model.score(X_test, y_test). It printed 0.91 and I am not sure how to interpret it.",
    "I think it is how much of the loss was removed during training, so 91% of the loss is gone.",
    "That would be 182 examples out of 200 classified correctly.",
]


def main():
    dump(DATA / "kc" / "ai_course.json", kc_list())
    profiles, script = benchmark()
    dump(DATA / "benchmark" / "profiles.json", profiles)
    dump(DATA / "benchmark" / "script.json", script)
    transcripts, labels, cscript = completeness()
    dump(DATA / "completeness" / "transcripts.json", transcripts)
    dump(DATA / "completeness" / "labels.json", labels)
    dump(DATA / "completeness" / "script.json", cscript)
    for name, text in DEMO_CORPUS.items():
        p = DATA / "demo" / "corpus" / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    dump(DATA / "demo" / "script.json", {"dialogue": DEMO_DIALOGUE, "analysis": DEMO_ANALYSIS})
    dump(DATA / "demo" / "student.json", DEMO_STUDENT)


if __name__ == "__main__":
    main()
