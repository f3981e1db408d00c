// Intent page: describe the research goal, optionally reveal and edit the
// stage system prompt, submit, then wait for ideas.

import { el } from '../dom';
import type { SessionView } from '../state';

export interface IntentPageActions {
  submitIntent(text: string, override: string | null): Promise<void>;
}

export function renderIntentPage(
  root: HTMLElement,
  view: SessionView,
  actions: IntentPageActions,
): void {
  const systemPrompt = (view.snapshot as unknown as { system_prompt?: string }).system_prompt ?? '';
  const intentInput = el('textarea', {
    id: 'intent-text',
    placeholder: 'Describe your research intent',
  });
  const overrideArea = el('textarea', { id: 'system-prompt', class: 'hidden' });
  overrideArea.value = systemPrompt;
  let revealed = false;
  const revealButton = el('button', { id: 'reveal-prompt' }, 'Show system prompt');
  revealButton.addEventListener('click', () => {
    revealed = !revealed;
    overrideArea.classList.toggle('hidden', !revealed);
    revealButton.textContent = revealed ? 'Hide system prompt' : 'Show system prompt';
  });

  const errorBanner = el('div', { id: 'intent-error', class: 'banner hidden' });
  const submitButton = el('button', { id: 'submit-intent' }, 'Submit');
  submitButton.addEventListener('click', () => {
    const text = intentInput.value.trim();
    if (!text) {
      errorBanner.textContent = 'Intent must be non-empty.';
      errorBanner.classList.remove('hidden');
      return;
    }
    const override =
      revealed && overrideArea.value.trim() !== systemPrompt.trim()
        ? overrideArea.value
        : null;
    void actions.submitIntent(text, override).catch((error: Error) => {
      errorBanner.textContent = error.message;
      errorBanner.classList.remove('hidden');
    });
  });

  root.append(
    el('h1', {}, 'Research intent'),
    intentInput,
    el('div', {}, revealButton),
    overrideArea,
    submitButton,
    errorBanner,
  );
  if (view.phase === 'thinking') {
    root.append(el('div', { id: 'thinking-spinner' }, 'Generating candidate ideas…'));
  }
}
