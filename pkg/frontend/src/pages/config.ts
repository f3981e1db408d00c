// Configuration page: model picker, API key entry, Start Session.
// The key travels to the server once and lives in memory there; it is never
// stored client-side either.

import { el } from '../dom';

export interface ConfigPageActions {
  startSession(model: string, apiKey: string, budget: string): Promise<void>;
}

const MODELS = ['scripted', 'gpt-4o-mini', 'gpt-4o', 'claude-3-5-sonnet'];

export function renderConfigPage(root: HTMLElement, actions: ConfigPageActions): void {
  const modelSelect = el('select', { id: 'model-select' });
  for (const model of MODELS) {
    modelSelect.append(el('option', { value: model }, model));
  }
  const keyInput = el('input', {
    id: 'api-key',
    type: 'password',
    placeholder: 'API key (kept in memory only)',
  });
  const budgetInput = el('input', { id: 'budget', type: 'text', value: '10.0' });
  const startButton = el('button', { id: 'start-session', disabled: '' }, 'Start Session');
  const errorBanner = el('div', { id: 'config-error', class: 'banner hidden' });

  const refresh = () => {
    // Scripted runs need no key; live models do.
    const needsKey = modelSelect.value !== 'scripted';
    if (needsKey && keyInput.value.trim() === '') {
      startButton.setAttribute('disabled', '');
    } else {
      startButton.removeAttribute('disabled');
    }
  };
  keyInput.addEventListener('input', refresh);
  modelSelect.addEventListener('change', refresh);

  startButton.addEventListener('click', () => {
    void actions
      .startSession(modelSelect.value, keyInput.value, budgetInput.value)
      .catch((error: Error) => {
        errorBanner.textContent = error.message;
        errorBanner.classList.remove('hidden');
      });
  });

  root.append(
    el('h1', {}, 'Configure a session'),
    el('label', { for: 'model-select' }, 'Model'),
    modelSelect,
    el('label', { for: 'api-key' }, 'API key'),
    keyInput,
    el('label', { for: 'budget' }, 'Budget'),
    budgetInput,
    startButton,
    errorBanner,
  );
  refresh();
}
