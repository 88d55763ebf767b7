// Intake form: 16 fields with inline validation, a verdict panel with
// score bars and the neighbor explanation. The panel only renders what the
// service returned; no clinical logic runs in the browser.
import { ServiceError, submitPatient } from "./api.js";
import { SCHEMA } from "./schema.js";
import type { TriageResponse } from "./types.js";
import { toRequestBody, validateForm } from "./validation.js";

export interface IntakeCallbacks {
  onVerdict(response: TriageResponse): void;
  onServiceDown(): void;
}

const FIELD_DEFAULTS: Record<string, string> = {
  gender: "1",
  exercise_angina: "0",
  hypertension: "0",
  heart_disease: "0",
  chest_pain_type: "1",
  residence_type: "Urban",
  smoking_status: "never smoked",
};

export class IntakeForm {
  readonly form: HTMLFormElement;
  private readonly errors = new Map<string, HTMLElement>();
  private readonly submitButton: HTMLButtonElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly verdictPanel: HTMLElement,
    private readonly callbacks: IntakeCallbacks,
  ) {
    this.form = document.createElement("form");
    this.form.className = "intake";
    for (const field of SCHEMA.features) {
      this.form.appendChild(this.renderField(field));
    }
    this.submitButton = document.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.textContent = "Assign priority";
    this.form.appendChild(this.submitButton);
    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
    this.form.addEventListener("input", () => this.refreshValidity());
    this.root.appendChild(this.form);
    this.refreshValidity();
  }

  values(): Record<string, string> {
    const out: Record<string, string> = {};
    for (const field of SCHEMA.features) {
      const input = this.form.elements.namedItem(field) as HTMLInputElement | HTMLSelectElement | null;
      out[field] = input ? input.value : "";
    }
    return out;
  }

  private renderField(field: string): HTMLElement {
    const wrapper = document.createElement("label");
    wrapper.className = "field";
    wrapper.dataset.field = field;

    const caption = document.createElement("span");
    caption.textContent = field.replace(/_/g, " ");
    wrapper.appendChild(caption);

    const categorical = SCHEMA.categorical_values[field as keyof typeof SCHEMA.categorical_values];
    if (categorical) {
      const select = document.createElement("select");
      select.name = field;
      for (const value of categorical) {
        const option = document.createElement("option");
        option.value = value;
        option.textContent = value;
        select.appendChild(option);
      }
      select.value = FIELD_DEFAULTS[field] ?? categorical[0];
      wrapper.appendChild(select);
    } else {
      const input = document.createElement("input");
      input.name = field;
      input.inputMode = "decimal";
      input.value = FIELD_DEFAULTS[field] ?? "";
      wrapper.appendChild(input);
    }

    const error = document.createElement("small");
    error.className = "field-error";
    wrapper.appendChild(error);
    this.errors.set(field, error);
    return wrapper;
  }

  /** Re-validate every field; submit stays disabled until all are valid. */
  refreshValidity(): boolean {
    const issues = validateForm(this.values());
    for (const [field, el] of this.errors) {
      const issue = issues.find((i) => i.field === field);
      el.textContent = issue ? issue.message : "";
    }
    this.submitButton.disabled = issues.length > 0;
    return issues.length === 0;
  }

  showFieldError(field: string, message: string): void {
    const el = this.errors.get(field);
    if (el) {
      el.textContent = message;
    }
  }

  private async submit(): Promise<void> {
    if (!this.refreshValidity()) {
      return;
    }
    try {
      const response = await submitPatient(toRequestBody(this.values()));
      this.renderVerdict(response);
      this.callbacks.onVerdict(response);
    } catch (err) {
      if (err instanceof ServiceError) {
        if (err.status === 503) {
          this.callbacks.onServiceDown();
        } else if (err.body.field) {
          this.showFieldError(err.body.field, err.body.error);
        } else {
          this.showFieldError(SCHEMA.features[0], err.body.error);
        }
      } else {
        this.callbacks.onServiceDown();
      }
    }
  }

  renderVerdict(response: TriageResponse): void {
    const { verdict } = response;
    this.verdictPanel.textContent = "";
    const headline = document.createElement("h3");
    headline.className = `verdict-level level-${verdict.level.toLowerCase()}`;
    headline.textContent = `${verdict.level} — queue entry #${response.entry_id}`;
    this.verdictPanel.appendChild(headline);

    const bars = document.createElement("div");
    bars.className = "score-bars";
    for (const level of SCHEMA.levels) {
      const row = document.createElement("div");
      row.className = "score-row";
      const name = document.createElement("span");
      name.textContent = level;
      const bar = document.createElement("div");
      bar.className = `bar bar-${level.toLowerCase()}`;
      bar.style.width = `${Math.round(verdict.scores[level] * 100)}%`;
      const pct = document.createElement("span");
      pct.textContent = `${(verdict.scores[level] * 100).toFixed(1)}%`;
      row.append(name, bar, pct);
      bars.appendChild(row);
    }
    this.verdictPanel.appendChild(bars);

    const neighbors = document.createElement("p");
    neighbors.className = "neighbors";
    neighbors.textContent = verdict.neighbors.length
      ? "similar patients: " + verdict.neighbors.map((n) => `#${n.node} (${n.weight.toFixed(3)})`).join(", ")
      : "no similar patients cleared the graph threshold";
    this.verdictPanel.appendChild(neighbors);

    if (verdict.clamped_features > 0) {
      const note = document.createElement("p");
      note.className = "clamp-note";
      note.textContent = `${verdict.clamped_features} feature(s) outside the training range were clamped`;
      this.verdictPanel.appendChild(note);
    }
  }
}
