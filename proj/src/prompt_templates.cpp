// SPDX-License-Identifier: Apache-2.0
// Default prompt templates. Kept byte-identical to data/prompts/*.txt.
#include <agentml/protocol.hpp>

namespace agentml
{

PromptTemplateSet PromptTemplateSet::defaults()
{
    PromptTemplateSet set;
    set.initial_template = R"PROMPT(You are a helpful research assistant. You have access to the following tools:
{tools_prompt}

Research Problem: {research_problem}

Always respond in this format exactly:
{format_prompt}
Observation:
'''
the result of the action
''')PROMPT";
    set.tools_prompt = R"PROMPT(You are a helpful research assistant. You have access to the following tools:
- List Files:
        Use this to navigate the file system.
        Usage:
        '''
        Action: List Files
        Action Input: {
            "dir_path": [a valid relative path to a directory, such as "." or "folder1/folder2"]
        }
        Observation: [The observation will be a list of files and folders in dir_path or current directory is dir_path is empty, or an error message if dir_path is invalid.]
        '''

- Copy File:
        Use this to copy a file to a new location with a new name.
        Usage:
        '''
        Action: Copy File
        Action Input: {
            "source": [a valid file name with relative path to current directory if needed],
            "destination": [a valid file name with relative path to current directory if needed]
        }
        Observation: [A success message if the file is copied successfully, or an error message if the file cannot be copied.]
        '''

- Execute Script:
        Use this to execute the python script. The script must already exist.
        Usage:
        '''
        Action: Execute Script
        Action Input: {
            "script_name": [a valid python script name with relative path to current directory if needed]
        }
        Observation: [The observation will be output of the script or errors.]
        '''

- Final Answer:
        Use this to provide the final answer to the current task.
        Usage:
        '''
        Action: Final Answer
        Action Input: {
            "final_answer": [a detailed description on the final answer]
        }
        Observation: [The observation will be empty.]
        '''

- Understand File:
        Use this to read the whole file and understand certain aspects. You should provide detailed description on what to look for and what should be returned. To get a better understanding of the file, you can use Inspect Script Lines action to inspect specific part of the file.
        Usage:
        '''
        Action: Understand File
        Action Input: {
            "file_name": [a valid file name with relative path to current directory if needed],
            "things_to_look_for": [a detailed description on what to look for and what should returned]
        }
        Observation: [The observation will be a description of relevant content and lines in the file. If the file does not exist, the observation will be an error message.]
        '''

- Inspect Script Lines:
        Use this to inspect specific part of a python script precisely, or the full content of a short script. The number of lines to display is limited to 100 lines. This is especially helpful when debugging.
        Usage:
        '''
        Action: Inspect Script Lines
        Action Input: {
            "script_name": [a valid python script name with relative path to current directory if needed],
            "start_line_number": [a valid line number],
            "end_line_number": [a valid line number]
        }
        Observation: [The observation will be the content of the script between start_line_number and end_line_number . If the script does not exist, the observation will be an error message.]
        '''

- Edit Script (AI):
        Use this to do a relatively large but cohesive edit over a python script. Instead of editing the script directly, you should describe the edit instruction so that another AI can help you do this.
        Usage:
        '''
        Action: Edit Script (AI)
        Action Input: {
            "script_name": [a valid python script name with relative path to current directory if needed. An empty sctipt will be created if it does not exist.],
            "edit_instruction": [a detailed step by step description on how to edit it.],
            "save_name": [a valid file name with relative path to current directory if needed]
        }
        Observation: [The observation will be the edited content of the script. If the script does not exist, the observation will be an error message. You should always double check whether the edit is correct.]
        ''')PROMPT";
    set.format_prompt = R"PROMPT(Reflection: What does the observation mean? If there is an error, what caused the error and how to debug?
Research Plan and Status: The full high-level research plan, with current status and confirmed results of each step briefly annotated. It must only include progress that has been made by previous steps. If there is any update, enclose the new update text in double asterisks **like this**. If there is no update, just copy the previous step Research Plan and Status. The high-level plan from the previous step should be fully retained, unless it is intentionally revised.
Fact Check: List all objective statements in the updates to Research Plan and Status one by one and point out whether it is guessed versus directly confirmed by the previous observation directly above. Performance numbers can only be confirmed by running the code and observing the output.
Thought: What you are currently doing, what actions to perform and why
Action: The action to take, should be one of the names of the tools
Action Input: The input to the action as a valid JSON string)PROMPT";
    return set;
}

} // namespace agentml
